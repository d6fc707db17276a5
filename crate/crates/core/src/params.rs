//! Physical inputs of the model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::planck_occupation;
use crate::units::PhysicalConstants;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{field}` is not finite ({value})")]
    NonFinite { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be > 0, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("parameter `{field}` must be >= 0, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("parameter `N` must be >= 1, got {0}")]
    TooFewParticles(f64),
    #[error("total mass M = {big_m} differs from N*m = {expected}")]
    MassMismatch { big_m: f64, expected: f64 },
    #[error("parameter `dims` must be 1 or 3, got {0}")]
    Dims(u8),
    #[error("{0}")]
    Other(String),
}

impl ParamError {
    pub(crate) fn check_finite(field: &'static str, value: f64) -> Result<(), ParamError> {
        if value.is_finite() {
            Ok(())
        } else {
            Err(ParamError::NonFinite { field, value })
        }
    }

    pub(crate) fn check_positive(field: &'static str, value: f64) -> Result<(), ParamError> {
        Self::check_finite(field, value)?;
        if value > 0.0 {
            Ok(())
        } else {
            Err(ParamError::NotPositive { field, value })
        }
    }

    pub fn check_nonnegative(field: &'static str, value: f64) -> Result<(), ParamError> {
        Self::check_finite(field, value)?;
        if value >= 0.0 {
            Ok(())
        } else {
            Err(ParamError::Negative { field, value })
        }
    }
}

/// N particles of mass m bound into one body of mass M = N·m, coupled with
/// strength Λ to a thermal bath at temperature T whose spectrum is centred
/// on ω with correlation time τ_c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_particles: f64,
    pub m: f64,
    pub big_m: f64,
    pub omega: f64,
    pub lambda: f64,
    pub tau_c: f64,
    pub temperature: f64,
    pub dims: u8,
    pub consts: PhysicalConstants,
}

impl ModelParams {
    /// One-dimensional parameter set with M = N·m.
    pub fn new(
        n_particles: f64,
        m: f64,
        omega: f64,
        lambda: f64,
        tau_c: f64,
        temperature: f64,
        consts: PhysicalConstants,
    ) -> Result<Self, ParamError> {
        let p = ModelParams { n_particles, m, big_m: n_particles * m, omega, lambda, tau_c, temperature, dims: 1, consts };
        p.validate()?;
        Ok(p)
    }

    /// Engine units (ℏ = k_B = m = ω = 1) with the temperature chosen so the
    /// resonant occupation equals `nbar`. τ_c is set to 0.05.
    pub fn engine(n_particles: f64, lambda: f64, nbar: f64) -> Result<Self, ParamError> {
        ParamError::check_nonnegative("nbar", nbar)?;
        let temperature = if nbar == 0.0 { 0.0 } else { 1.0 / (1.0 / nbar).ln_1p() };
        Self::new(n_particles, 1.0, 1.0, lambda, 0.05, temperature, PhysicalConstants::NATURAL)
    }

    pub fn with_dims(mut self, dims: u8) -> Result<Self, ParamError> {
        self.dims = dims;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        ParamError::check_finite("N", self.n_particles)?;
        if self.n_particles < 1.0 {
            return Err(ParamError::TooFewParticles(self.n_particles));
        }
        ParamError::check_positive("m", self.m)?;
        ParamError::check_positive("M", self.big_m)?;
        ParamError::check_positive("omega", self.omega)?;
        ParamError::check_nonnegative("Lambda", self.lambda)?;
        ParamError::check_positive("tau_c", self.tau_c)?;
        ParamError::check_nonnegative("T", self.temperature)?;
        let expected = self.n_particles * self.m;
        if ((self.big_m - expected) / expected).abs() > 1e-12 {
            return Err(ParamError::MassMismatch { big_m: self.big_m, expected });
        }
        if self.dims != 1 && self.dims != 3 {
            return Err(ParamError::Dims(self.dims));
        }
        Ok(())
    }

    #[inline]
    pub fn hbar(&self) -> f64 {
        self.consts.hbar()
    }

    /// Occupation of the bath mode resonant with ω.
    pub fn nbar(&self) -> f64 {
        planck_occupation(self.omega, self.temperature, &self.consts).unwrap_or(0.0)
    }

    /// 1 + 2n̄, the temperature factor after collapsing the spectrum onto ω.
    pub fn thermal_factor(&self) -> f64 {
        1.0 + 2.0 * self.nbar()
    }

    /// NΛ, the damping rate of the mode.
    pub fn damping(&self) -> f64 {
        self.n_particles * self.lambda
    }

    /// ℏω/k_BT; infinite at T = 0.
    pub fn p(&self) -> f64 {
        self.hbar() * self.omega / (self.consts.k_b() * self.temperature)
    }

    /// ωτ_c.
    pub fn xi(&self) -> f64 {
        self.omega * self.tau_c
    }
}
