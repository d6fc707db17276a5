//! Physical constants and the CGS ↔ dimensionless-engine conversion.
//!
//! The dynamical engines run in units where ℏ = m = ω = 1; the closed-form
//! calculators take raw CGS. A [`UnitSystem`] is three scales (time, length,
//! mass per engine unit); temperature stays in kelvin and k_B is rescaled to
//! engine energy per kelvin, so every dimensionless group (ℏω/k_BT, Λ/ω, ωτ_c)
//! is untouched by a conversion.

use serde::{Deserialize, Serialize};

use crate::params::{ModelParams, ParamError};

/// ℏ and k_B in whatever unit system a [`ModelParams`] is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    hbar: f64,
    k_b: f64,
}

impl PhysicalConstants {
    /// Reference CGS values: ℏ in erg·s, k_B in erg/K.
    pub const CGS: PhysicalConstants = PhysicalConstants { hbar: 1.0546e-27, k_b: 1.3807e-16 };

    /// ℏ = k_B = 1; temperatures are then energies in units of ℏω.
    pub const NATURAL: PhysicalConstants = PhysicalConstants { hbar: 1.0, k_b: 1.0 };

    pub fn new(hbar: f64, k_b: f64) -> Result<Self, ParamError> {
        ParamError::check_positive("hbar", hbar)?;
        ParamError::check_positive("k_B", k_b)?;
        Ok(PhysicalConstants { hbar, k_b })
    }

    #[inline]
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    #[inline]
    pub fn k_b(&self) -> f64 {
        self.k_b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Cgs,
    DimensionlessEngine,
}

/// Scales of one engine unit expressed in CGS: seconds, centimetres and grams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub kind: UnitKind,
    pub scale_time: f64,
    pub scale_length: f64,
    pub scale_mass: f64,
}

impl UnitSystem {
    pub fn identity() -> Self {
        UnitSystem { kind: UnitKind::Cgs, scale_time: 1.0, scale_length: 1.0, scale_mass: 1.0 }
    }

    pub fn new(kind: UnitKind, scale_time: f64, scale_length: f64, scale_mass: f64) -> Result<Self, ParamError> {
        ParamError::check_positive("scale_time", scale_time)?;
        ParamError::check_positive("scale_length", scale_length)?;
        ParamError::check_positive("scale_mass", scale_mass)?;
        Ok(UnitSystem { kind, scale_time, scale_length, scale_mass })
    }

    /// The scales for which a CGS parameter set maps to ℏ = m = ω = 1.
    pub fn natural_for(params: &ModelParams) -> Result<Self, ParamError> {
        params.validate()?;
        let hbar = params.consts.hbar();
        UnitSystem::new(UnitKind::DimensionlessEngine, 1.0 / params.omega, (hbar / (params.m * params.omega)).sqrt(), params.m)
    }

    fn energy(&self) -> f64 {
        self.scale_mass * self.scale_length * self.scale_length / (self.scale_time * self.scale_time)
    }
}

/// Express CGS parameters in the engine units described by `unit`.
pub fn to_engine_units(params: &ModelParams, unit: &UnitSystem) -> Result<ModelParams, ParamError> {
    params.validate()?;
    let e = unit.energy();
    let t = unit.scale_time;
    let consts = PhysicalConstants::new(params.consts.hbar() / (e * t), params.consts.k_b() / e)?;
    let out = ModelParams {
        n_particles: params.n_particles,
        m: params.m / unit.scale_mass,
        big_m: params.big_m / unit.scale_mass,
        omega: params.omega * t,
        lambda: params.lambda * t,
        tau_c: params.tau_c / t,
        temperature: params.temperature,
        dims: params.dims,
        consts,
    };
    out.validate()?;
    Ok(out)
}

/// Inverse of [`to_engine_units`].
pub fn from_engine_units(params: &ModelParams, unit: &UnitSystem) -> Result<ModelParams, ParamError> {
    params.validate()?;
    let e = unit.energy();
    let t = unit.scale_time;
    let consts = PhysicalConstants::new(params.consts.hbar() * e * t, params.consts.k_b() * e)?;
    let out = ModelParams {
        n_particles: params.n_particles,
        m: params.m * unit.scale_mass,
        big_m: params.big_m * unit.scale_mass,
        omega: params.omega / t,
        lambda: params.lambda / t,
        tau_c: params.tau_c * t,
        temperature: params.temperature,
        dims: params.dims,
        consts,
    };
    out.validate()?;
    Ok(out)
}
