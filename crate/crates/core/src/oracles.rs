//! Closed-form moment dynamics, thermalisation, Λ estimate, decoherence
//! times and linear-entropy growth.
//!
//! Moments are per Cartesian component. Results for `dims = 3` are the sum
//! over three identical uncoupled components, i.e. 3× the one-dimensional
//! value; first moments are always per component.
//!
//! With g = NΛ, 𝓘 = 1 + 2n̄ and the free-flight values
//! Q²_s = Q²₀ + C₀t/M + P²₀t²/M², C_s = C₀ + 2P²₀t/M (C = ⟨{Q,P}⟩), the
//! per-component solutions are
//!   P² = P²₀e^{−gt} + (N𝓘mℏω/2)(1 − e^{−gt})
//!   C  = C_s e^{−gt} + 𝓘ℏω[(1 − e^{−gt})/g − te^{−gt}]
//!   Q² = Q²_s e^{−gt} + (𝓘ℏω/M)[(1 − e^{−gt})/g² − (t/g)e^{−gt} − (t²/2)e^{−gt}]
//!        + (ℏ𝓘/(2mωN))(1 − e^{−gt}).

use thiserror::Error;

use crate::params::{ModelParams, ParamError};

/// Reported Caldeira–Leggett decoherence time for the macroscopic case, in s.
pub const CALDEIRA_LEGGETT_TAU_D: f64 = 1e-23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("initial moments violate {0}")]
    Moments(String),
    #[error("K_s = {k_s} must exceed K_eq = {k_eq} (system already thermalised)")]
    AlreadyThermalised { k_s: f64, k_eq: f64 },
    #[error("dims must be 1 or 3, got {0}")]
    Dims(u8),
}

fn check_dims(dims: u8) -> Result<f64, OracleError> {
    match dims {
        1 | 3 => Ok(dims as f64),
        d => Err(OracleError::Dims(d)),
    }
}

/// First and second moments of one Cartesian component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub q: f64,
    pub p: f64,
    pub q2: f64,
    /// ⟨{Q, P}⟩
    pub qp: f64,
    pub p2: f64,
}

impl Moments {
    pub fn var_q(&self) -> f64 {
        self.q2 - self.q * self.q
    }

    pub fn var_p(&self) -> f64 {
        self.p2 - self.p * self.p
    }

    /// ⟨Δ{Q,P}⟩ = ⟨{Q,P}⟩ − 2⟨Q⟩⟨P⟩.
    pub fn cov(&self) -> f64 {
        self.qp - 2.0 * self.q * self.p
    }
}

/// Moments at t = 0, per Cartesian component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialMoments(Moments);

impl InitialMoments {
    /// Checks the covariance matrix is positive semidefinite and obeys the
    /// uncertainty relation.
    pub fn new(m: Moments, hbar: f64) -> Result<Self, OracleError> {
        for (name, v) in [("Q0", m.q), ("P0", m.p), ("Q2_0", m.q2), ("QP_0", m.qp), ("P2_0", m.p2)] {
            ParamError::check_finite(name, v)?;
        }
        let (vq, vp, c) = (m.var_q(), m.var_p(), 0.5 * m.cov());
        let scale = (vq * vp).abs().max(hbar * hbar);
        if vq < 0.0 || vp < 0.0 {
            return Err(OracleError::Moments("non-negative variances".into()));
        }
        if vq * vp - c * c < 0.25 * hbar * hbar - 1e-10 * scale {
            return Err(OracleError::Moments("the uncertainty relation".into()));
        }
        Ok(InitialMoments(m))
    }

    pub fn moments(&self) -> &Moments {
        &self.0
    }
}

pub fn first_moments(t: f64, params: &ModelParams, init: &InitialMoments) -> (f64, f64) {
    let m = init.moments();
    let decay = (-0.5 * params.damping() * t).exp();
    (decay * (m.q + m.p * t / params.big_m), decay * m.p)
}

/// (⟨Q²⟩, ⟨{Q,P}⟩, ⟨P²⟩), summed over `dims` components.
pub fn second_moments(t: f64, params: &ModelParams, init: &InitialMoments, dims: u8) -> Result<(f64, f64, f64), OracleError> {
    let k = check_dims(dims)?;
    let m0 = init.moments();
    let big_m = params.big_m;
    let (hbar, mass, w, n) = (params.hbar(), params.m, params.omega, params.n_particles);
    let ii = params.thermal_factor();
    let g = params.damping();

    let q2_s = m0.q2 + m0.qp * t / big_m + m0.p2 * t * t / (big_m * big_m);
    let c_s = m0.qp + 2.0 * m0.p2 * t / big_m;
    if g == 0.0 {
        return Ok((k * q2_s, k * c_s, k * m0.p2));
    }
    let e = (-g * t).exp();
    let one_m = -(-g * t).exp_m1();
    let a = ii * hbar * w;
    let p2 = m0.p2 * e + 0.5 * n * ii * mass * hbar * w * one_m;
    let c = c_s * e + a * (one_m / g - t * e);
    // (1 − e)/g² − (t/g)e − (t²/2)e is O(t³); expand when gt is small
    let gt = g * t;
    let bracket =
        if gt < 1e-3 { t * t * t * g * (1.0 / 6.0 - gt / 8.0 + gt * gt / 30.0) } else { one_m / (g * g) - t / g * e - 0.5 * t * t * e };
    let q2 = q2_s * e + a / big_m * bracket + hbar * ii / (2.0 * mass * w * n) * one_m;
    Ok((k * q2, k * c, k * p2))
}

/// Right-hand side of the moment equations for one component.
pub fn moment_derivatives(params: &ModelParams, m: &Moments) -> Moments {
    let big_m = params.big_m;
    let g = params.damping();
    let ii = params.thermal_factor();
    let (hbar, mass, w, n, lam) = (params.hbar(), params.m, params.omega, params.n_particles, params.lambda);
    Moments {
        q: m.p / big_m - 0.5 * g * m.q,
        p: -0.5 * g * m.p,
        q2: m.qp / big_m - g * m.q2 + hbar * lam * ii / (2.0 * mass * w),
        qp: 2.0 * m.p2 / big_m - g * m.qp,
        p2: -g * m.p2 + 0.5 * n * n * lam * mass * hbar * w * ii,
    }
}

pub fn kinetic_energy(t: f64, params: &ModelParams, init: &InitialMoments, dims: u8) -> Result<f64, OracleError> {
    let (_, _, p2) = second_moments(t, params, init, dims)?;
    Ok(p2 / (2.0 * params.big_m))
}

/// K_eq = (dims/3)·3𝓘ℏω/4.
pub fn equilibrium_kinetic(params: &ModelParams, dims: u8) -> Result<f64, OracleError> {
    let k = check_dims(dims)?;
    Ok(k * 0.25 * params.thermal_factor() * params.hbar() * params.omega)
}

/// Λ from a relaxation time: (1/(Nτ_R))·ln((K_s − K_eq)/K_eq).
pub fn estimate_lambda(n: f64, tau_r: f64, k_s: f64, k_eq: f64) -> Result<f64, OracleError> {
    ParamError::check_positive("N", n)?;
    ParamError::check_positive("tau_R", tau_r)?;
    ParamError::check_positive("K_eq", k_eq)?;
    ParamError::check_finite("K_s", k_s)?;
    if k_s <= k_eq {
        return Err(OracleError::AlreadyThermalised { k_s, k_eq });
    }
    Ok(((k_s - k_eq) / k_eq).ln() / (n * tau_r))
}

/// 𝓓 = NMΛω(1 + 2n̄)/(4ℏ).
pub fn diffusion_constant(params: &ModelParams) -> f64 {
    params.n_particles * params.big_m * params.lambda * params.omega * params.thermal_factor() / (4.0 * params.hbar())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoherenceRegime {
    General,
    LowFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceQuery {
    pub params: ModelParams,
    pub delta_q: f64,
    pub regime: DecoherenceRegime,
}

/// τ_D. General: 1/(𝓓ΔQ²). Low frequency: the same with 1 + 2n̄ replaced by
/// its k_BT ≫ ℏω asymptote 2k_BT/(ℏω), i.e. 2ℏ²/(NΛMk_BTΔQ²).
pub fn decoherence_time(query: &DecoherenceQuery) -> Result<f64, OracleError> {
    let p = &query.params;
    p.validate()?;
    ParamError::check_positive("deltaQ", query.delta_q)?;
    let dq2 = query.delta_q * query.delta_q;
    Ok(match query.regime {
        DecoherenceRegime::General => 1.0 / (diffusion_constant(p) * dq2),
        DecoherenceRegime::LowFrequency => {
            let hbar = p.hbar();
            2.0 * hbar * hbar / (p.n_particles * p.lambda * p.big_m * p.consts.k_b() * p.temperature * dq2)
        }
    })
}

/// The low-frequency expression with the prefactor ℏ²/2 instead of 2ℏ²,
/// a factor 4 below the limit of the general form.
pub fn decoherence_time_low_frequency_quarter(params: &ModelParams, delta_q: f64) -> Result<f64, OracleError> {
    let q = DecoherenceQuery { params: *params, delta_q, regime: DecoherenceRegime::LowFrequency };
    Ok(0.25 * decoherence_time(&q)?)
}

/// ζ = 𝓓ΔQ².
pub fn offdiag_decay_rate(params: &ModelParams, delta_q: f64) -> f64 {
    diffusion_constant(params) * delta_q * delta_q
}

/// First-order growth rate of the linear entropy, 4𝓓(⟨ΔQ²⟩ + ⟨ΔP²⟩/(Nmω)²),
/// summed over `dims` components.
pub fn entropy_rate(params: &ModelParams, variances: (f64, f64, f64), dims: u8) -> Result<f64, OracleError> {
    let k = check_dims(dims)?;
    let (vq, vp, _) = variances;
    let nmw = params.n_particles * params.m * params.omega;
    Ok(k * 4.0 * diffusion_constant(params) * (vq + vp / (nmw * nmw)))
}

/// S_l(t) ≈ 4𝓓[(⟨ΔQ²⟩₀ + ⟨ΔP²⟩₀/(Nmω)²)t + ⟨Δ{Q,P}⟩₀t²/(2M) + ⟨ΔP²⟩₀t³/(3M²)],
/// free flight inside the first-order integral.
pub fn entropy_poly(t: f64, params: &ModelParams, init: &InitialMoments, dims: u8) -> Result<f64, OracleError> {
    let k = check_dims(dims)?;
    let m = init.moments();
    let (vq, vp, cov) = (m.var_q(), m.var_p(), m.cov());
    let big_m = params.big_m;
    let nmw = params.n_particles * params.m * params.omega;
    let lin = vq + vp / (nmw * nmw);
    Ok(k * 4.0 * diffusion_constant(params) * (lin * t + cov * t * t / (2.0 * big_m) + vp * t * t * t / (3.0 * big_m * big_m)))
}
