//! Bath spectrum, thermal occupation and the temperature integral
//! 𝓘 = ∫dΩ Γ(Ω)(1 + 2n(Ω)).
//!
//! Three evaluations of 𝓘 are offered:
//! * [`integral_i_quadrature`]: Ω from a positive cutoff to ∞ (the physical range);
//! * [`integral_i_full_line_quadrature`]: the principal value over the whole real
//!   axis, which is what closing the contour computes;
//! * [`integral_i_residue`]: the pole sum for the full-line integral.
//!
//! The pole sum is
//!   J = Re n(ξ + i) − (4ξ²/p) Σ_{n≥1} y_n / [(1 + ξ² − y_n²)² + 4ξ²y_n²],
//!   y_n = 2πn ξ/p,
//! with 𝓘 = 1 + 2J, where n(z) = 1/(e^{γz} − 1), γ = p/ξ, and x = τ_cΩ.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::params::ParamError;
use crate::quadrature::{integrate, integrate_semi_infinite, CompensatedSum, QuadError, QuadOptions};
use crate::units::PhysicalConstants;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("frequency must be > 0 (Planck divergence), got {0}")]
    ZeroFrequency(f64),
    #[error("invalid parameter: {0}")]
    Param(#[from] ParamError),
    #[error("residue series needs xi/p < 1, got xi/p = {0}")]
    Regime(f64),
    #[error("residue series needs n_terms >= 1")]
    NoTerms,
    #[error("imaginary part of the contour sum is {0:e}, expected < 1e-10")]
    ImaginaryResidual(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Normalised Lorentzian of width 1/τ_c centred on ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianSpectrum {
    omega_center: f64,
    tau_c: f64,
}

impl LorentzianSpectrum {
    pub fn new(omega_center: f64, tau_c: f64) -> Result<Self, SpectrumError> {
        ParamError::check_positive("omega", omega_center)?;
        ParamError::check_positive("tau_c", tau_c)?;
        Ok(LorentzianSpectrum { omega_center, tau_c })
    }

    pub fn omega_center(&self) -> f64 {
        self.omega_center
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    pub fn xi(&self) -> f64 {
        self.omega_center * self.tau_c
    }
}

/// p = ℏω/k_BT and ξ = ωτ_c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    p: f64,
    xi: f64,
}

impl ThermalParams {
    pub fn new(p: f64, xi: f64) -> Result<Self, SpectrumError> {
        ParamError::check_positive("p", p)?;
        ParamError::check_positive("xi", xi)?;
        Ok(ThermalParams { p, xi })
    }

    pub fn from_physical(spec: &LorentzianSpectrum, temperature: f64, consts: &PhysicalConstants) -> Result<Self, SpectrumError> {
        ParamError::check_positive("T", temperature)?;
        Self::new(consts.hbar() * spec.omega_center / (consts.k_b() * temperature), spec.xi())
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// γ = p/ξ = ℏ/(k_BTτ_c).
    pub fn gamma_ratio(&self) -> f64 {
        self.p / self.xi
    }
}

pub fn lorentzian_density(omega: f64, spec: &LorentzianSpectrum) -> f64 {
    let tc = spec.tau_c;
    let d = tc * (omega - spec.omega_center);
    tc / (PI * (d * d + 1.0))
}

/// ∫_ℝ Γ(Ω) dΩ, computed numerically.
pub fn lorentzian_norm(spec: &LorentzianSpectrum) -> Result<f64, SpectrumError> {
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, ..Default::default() };
    let w = spec.omega_center;
    // split at the peak; each half mapped to a half line in Ω
    let right = integrate_semi_infinite(|om| lorentzian_density(om, spec), w, opts)?;
    let left = integrate_semi_infinite(|s| lorentzian_density(2.0 * w - s, spec), w, opts)?;
    Ok(left.value + right.value)
}

/// Bose–Einstein occupation 1/(exp(ℏΩ/k_BT) − 1).
pub fn planck_occupation(omega: f64, temperature: f64, consts: &PhysicalConstants) -> Result<f64, SpectrumError> {
    ParamError::check_finite("Omega", omega)?;
    if omega <= 0.0 {
        return Err(SpectrumError::ZeroFrequency(omega));
    }
    ParamError::check_nonnegative("T", temperature)?;
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = consts.hbar() * omega / (consts.k_b() * temperature);
    Ok(1.0 / x.exp_m1())
}

/// 1 + 2n(ω).
pub fn integral_i_approx(omega: f64, temperature: f64, consts: &PhysicalConstants) -> Result<f64, SpectrumError> {
    Ok(1.0 + 2.0 * planck_occupation(omega, temperature, consts)?)
}

/// Default lower cutoff of the physical integral: ω/100.
pub fn default_omega_min(spec: &LorentzianSpectrum) -> f64 {
    spec.omega_center / 100.0
}

/// ∫_{Ω_min}^∞ Γ(Ω)(1 + 2n(Ω)) dΩ with absolute error ≤ `tol`.
pub fn integral_i_quadrature(
    spec: &LorentzianSpectrum,
    temperature: f64,
    omega_min: f64,
    tol: f64,
    consts: &PhysicalConstants,
) -> Result<f64, SpectrumError> {
    ParamError::check_positive("omega_min", omega_min)?;
    ParamError::check_positive("tol", tol)?;
    ParamError::check_nonnegative("T", temperature)?;
    let w = spec.omega_center;
    let xi = spec.xi();
    // Ω = ωu; Γ(Ω)dΩ = (ξ/π)/(ξ²(u − 1)² + 1) du
    let p = if temperature > 0.0 { consts.hbar() * w / (consts.k_b() * temperature) } else { f64::INFINITY };
    let f = |u: f64| {
        let lor = xi / (PI * (xi * xi * (u - 1.0) * (u - 1.0) + 1.0));
        let occ = if p.is_finite() { 2.0 / (p * u).exp_m1() } else { 0.0 };
        lor * (1.0 + occ)
    };
    let u_min = omega_min / w;
    let half = QuadOptions { abs_tol: 0.5 * tol, rel_tol: 0.0, ..Default::default() };
    let (low, high) = if u_min < 1.0 {
        (integrate(f, u_min, 1.0, half)?.value, integrate_semi_infinite(f, 1.0, half)?.value)
    } else {
        (0.0, integrate_semi_infinite(f, u_min, QuadOptions::abs(tol))?.value)
    };
    Ok(low + high)
}

/// Principal value of ∫_ℝ Γ(Ω)(1 + 2n(Ω)) dΩ, the quantity the pole sum evaluates.
pub fn integral_i_full_line_quadrature(tp: &ThermalParams, tol: f64) -> Result<f64, SpectrumError> {
    ParamError::check_positive("tol", tol)?;
    let (xi, g) = (tp.xi, tp.gamma_ratio());
    let lor = |x: f64| 1.0 / (PI * ((x - xi) * (x - xi) + 1.0));
    // n(x) + n(−x) = −1 folds the negative axis onto the positive one and
    // removes the pole at 0.
    let h = |x: f64| (lor(x) - lor(-x)) / (g * x).exp_m1() - lor(-x);
    let split = xi + 1.0;
    let opts = QuadOptions { abs_tol: 0.25 * tol, rel_tol: 0.0, ..Default::default() };
    let a = integrate(h, 0.0, split, opts)?.value;
    let b = integrate_semi_infinite(h, split, opts)?.value;
    Ok(1.0 + 2.0 * (a + b))
}

/// Breakdown of the pole sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidueSeries {
    /// 1 + 2(first + series + tail).
    pub value: f64,
    /// Re n(ξ + i), the contribution of the Lorentzian pole.
    pub first_term: f64,
    /// Sum of the first `n_terms` Bose-pole terms, signed.
    pub series: f64,
    /// Estimate of the omitted terms, signed.
    pub tail: f64,
    /// Bound on |tail|.
    pub tail_bound: f64,
    /// Imaginary part of the full contour sum, which must vanish.
    pub imag_residual: f64,
}

/// Σ_{n>N} n^{−k} by Euler–Maclaurin.
fn zeta_tail(k: i32, n: f64) -> f64 {
    let kf = k as f64;
    n.powi(1 - k) / (kf - 1.0) - 0.5 * n.powi(-k) + kf / 12.0 * n.powi(-k - 1) - kf * (kf + 1.0) * (kf + 2.0) / 720.0 * n.powi(-k - 3)
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    terms.into_iter().collect::<CompensatedSum>().value()
}

pub fn integral_i_residue(tp: &ThermalParams, n_terms: usize) -> Result<f64, SpectrumError> {
    Ok(integral_i_residue_detailed(tp, n_terms)?.value)
}

pub fn integral_i_residue_detailed(tp: &ThermalParams, n_terms: usize) -> Result<ResidueSeries, SpectrumError> {
    if n_terms == 0 {
        return Err(SpectrumError::NoTerms);
    }
    let (p, xi) = (tp.p, tp.xi);
    if xi / p >= 1.0 {
        return Err(SpectrumError::Regime(xi / p));
    }
    let g = tp.gamma_ratio();
    let a = 1.0 + xi * xi;
    let dy = 2.0 * PI / g;
    let denom = |y: f64| (a - y * y).powi(2) + 4.0 * xi * xi * y * y;

    let z = Complex64::new(p, g).exp() - 1.0;
    let first = z.inv();

    let pref = 4.0 * xi * xi / p;
    let series = -pref
        * sorted_sum(
            (1..=n_terms)
                .map(|n| {
                    let y = n as f64 * dy;
                    y / denom(y)
                })
                .collect(),
        );

    let nf = n_terms as f64;
    let y_next = (nf + 1.0) * dy;
    let (tail, tail_bound) = if y_next > 3.0 * a.sqrt() {
        // y/D = 1/y³ − 2(ξ² − 1)/y⁵ + O(y⁻⁷)
        let c = 1.0 / dy;
        let t3 = c.powi(3) * zeta_tail(3, nf);
        let t5 = -2.0 * (xi * xi - 1.0) * c.powi(5) * zeta_tail(5, nf);
        let t = -pref * (t3 + t5);
        (t, (pref * t5).abs() + 1e-3 * t.abs())
    } else {
        // peak not yet passed: Σ ≈ (1/Δy)∫_{y_N}^∞ y/D dy, closed form
        let y_n = nf * dy;
        let integral = (0.5 * PI - ((y_n * y_n - (1.0 - xi * xi)) / (2.0 * xi)).atan()) / (4.0 * xi);
        let t = -pref * integral / dy;
        (t, t.abs())
    };

    let imag = imaginary_residual(first.im, xi, dy, g, n_terms);
    if imag.abs() >= 1e-10 {
        return Err(SpectrumError::ImaginaryResidual(imag));
    }
    Ok(ResidueSeries { value: 1.0 + 2.0 * (first.re + series + tail), first_term: first.re, series, tail, tail_bound, imag_residual: imag })
}

/// Im n(ξ + i) + (2/γ) Σ'_{n≥0} (1 + ξ² − y_n²)/D_n, primed sum halving n = 0.
fn imaginary_residual(first_im: f64, xi: f64, dy: f64, g: f64, n_terms: usize) -> f64 {
    let a = 1.0 + xi * xi;
    let denom = |y: f64| (a - y * y).powi(2) + 4.0 * xi * xi * y * y;
    // enough terms for the asymptotic tail to be accurate far below 1e-10
    let needed = (300.0 * a.sqrt() / dy).ceil() as usize;
    let n = n_terms.max(needed).min(50_000_000);
    let mut terms: Vec<f64> = (1..=n)
        .map(|k| {
            let y = k as f64 * dy;
            (a - y * y) / denom(y)
        })
        .collect();
    terms.push(0.5 * a / (a * a));
    let nf = n as f64;
    let c = 1.0 / dy;
    // (a − y²)/D = −1/y² + (3ξ² − 1)/y⁴ + O(y⁻⁶)
    terms.push(-c * c * zeta_tail(2, nf) + (3.0 * xi * xi - 1.0) * c.powi(4) * zeta_tail(4, nf));
    first_im + 2.0 / g * sorted_sum(terms)
}
