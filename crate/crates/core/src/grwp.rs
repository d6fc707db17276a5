//! Collapse-model (CSL) baseline: localisation kernel, reduction rates and
//! the anomalous spreading and heating they imply. CGS throughout.

use std::f64::consts::PI;

use crate::params::ParamError;
use crate::quadrature::{integrate, integrate_semi_infinite, QuadError, QuadOptions};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CslParams {
    /// Inverse squared localisation width, cm⁻².
    pub alpha: f64,
    /// Strength, cm³/s.
    pub zeta: f64,
    /// λ = ζ(α/4π)^{3/2}, s⁻¹.
    pub lambda_micro: f64,
    /// Number density, cm⁻³.
    pub d0: f64,
    /// Transverse cross-section, cm².
    pub s_i: f64,
    pub n: f64,
}

impl CslParams {
    pub fn new(alpha: f64, zeta: f64, d0: f64, s_i: f64, n: f64) -> Result<Self, ParamError> {
        ParamError::check_positive("alpha", alpha)?;
        ParamError::check_positive("zeta", zeta)?;
        ParamError::check_positive("D0", d0)?;
        ParamError::check_positive("S_i", s_i)?;
        ParamError::check_positive("n", n)?;
        Ok(CslParams { alpha, zeta, lambda_micro: zeta * (alpha / (4.0 * PI)).powf(1.5), d0, s_i, n })
    }

    /// Usual choice: α^{−1/2} = 10⁻⁵ cm, ζ = 10⁻³⁰ cm³/s, D₀ = 10²⁴ cm⁻³, S_i = 1 cm², n = 10²³.
    pub fn standard() -> Self {
        Self::new(1e10, 1e-30, 1e24, 1.0, 1e23).expect("standard constants are valid")
    }

    /// Rejects a stored λ that drifted from ζ(α/4π)^{3/2}.
    pub fn validate(&self) -> Result<(), ParamError> {
        let expected = self.zeta * (self.alpha / (4.0 * PI)).powf(1.5);
        if ((self.lambda_micro - expected) / expected).abs() > 1e-10 {
            return Err(ParamError::Other(format!(
                "lambda_micro = {} inconsistent with zeta*(alpha/4pi)^1.5 = {expected}",
                self.lambda_micro
            )));
        }
        Ok(())
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// n_x = (α/2π)^{3/2} Σ_i exp(−½α(x − q_i)²).
pub fn qmsl_density_eigenvalue(x: &Point, positions: &[Point], alpha: f64) -> f64 {
    let norm = (alpha / (2.0 * PI)).powf(1.5);
    positions.iter().map(|q| norm * (-0.5 * alpha * dist2(x, q)).exp()).sum()
}

/// F(Q − x) = Σ_i (α/2π)^{3/2} exp(−½α(Q − x + q̃_i)²).
pub fn csl_f(q_minus_x: &Point, offsets: &[Point], alpha: f64) -> f64 {
    let norm = (alpha / (2.0 * PI)).powf(1.5);
    offsets
        .iter()
        .map(|o| {
            let r = [q_minus_x[0] + o[0], q_minus_x[1] + o[1], q_minus_x[2] + o[2]];
            norm * (-0.5 * alpha * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2])).exp()
        })
        .sum()
}

/// One factor of a separable density profile D(y) = D₁(y₁)D₂(y₂)D₃(y₃).
/// Breakpoints mark discontinuities or narrow features for the quadrature.
pub struct AxisProfile<'a> {
    pub density: &'a dyn Fn(f64) -> f64,
    pub breakpoints: Vec<f64>,
}

impl<'a> AxisProfile<'a> {
    pub fn new(density: &'a dyn Fn(f64) -> f64, mut breakpoints: Vec<f64>) -> Self {
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        AxisProfile { density, breakpoints }
    }
}

fn axis_convolution(r: f64, axis: &AxisProfile, alpha: f64, tol: f64) -> Result<f64, QuadError> {
    let norm = (alpha / (2.0 * PI)).sqrt();
    let f = |y: f64| norm * (-0.5 * alpha * (r + y).powi(2)).exp() * (axis.density)(y);
    let opts = QuadOptions { abs_tol: tol, rel_tol: tol, max_intervals: 50_000 };
    // the kernel peak at y = −r is a breakpoint too
    let mut bp = axis.breakpoints.clone();
    let w = 8.0 / alpha.sqrt();
    bp.extend([-r - w, -r, -r + w]);
    bp.sort_by(f64::total_cmp);
    let mut total = integrate_semi_infinite(f, bp[bp.len() - 1], opts)?.value;
    total += integrate_semi_infinite(|s| f(-s), -bp[0], opts)?.value;
    for pair in bp.windows(2) {
        total += integrate(f, pair[0], pair[1], opts)?.value;
    }
    Ok(total)
}

/// F(Q − x) = ∫d³y (α/2π)^{3/2} exp(−½α(Q − x + y)²) D(y) for a separable profile.
pub fn csl_f_macroscopic(q_minus_x: &Point, profile: &[AxisProfile; 3], alpha: f64, tol: f64) -> Result<f64, QuadError> {
    let mut f = 1.0;
    for k in 0..3 {
        f *= axis_convolution(q_minus_x[k], &profile[k], alpha, tol)?;
    }
    Ok(f)
}

/// δ_i = (α/π)^{1/2} D₀² S_i.
pub fn delta_i(csl: &CslParams) -> f64 {
    (csl.alpha / PI).sqrt() * csl.d0 * csl.d0 * csl.s_i
}

/// Γ = ζ D₀ n_out.
pub fn macro_frequency(csl: &CslParams, n_out: f64) -> f64 {
    csl.zeta * csl.d0 * n_out
}

/// λ_CM = nλ.
pub fn lambda_cm(n: f64, lambda_micro: f64) -> f64 {
    n * lambda_micro
}

/// (⟨Q_i²⟩, ⟨P_i²⟩) = (⟨Q_i²⟩_s + ζδ_iℏ²t³/(6M²), ⟨P_i²⟩_s + ζδ_iℏ²t/2).
pub fn csl_spreading(t: f64, csl: &CslParams, big_m: f64, schrodinger: (f64, f64), hbar: f64) -> (f64, f64) {
    let k = csl.zeta * delta_i(csl) * hbar * hbar;
    (schrodinger.0 + k * t.powi(3) / (6.0 * big_m * big_m), schrodinger.1 + 0.5 * k * t)
}

/// ΔE/t = ζδ_iℏ²/M.
pub fn csl_energy_rate(csl: &CslParams, big_m: f64, hbar: f64) -> f64 {
    csl.zeta * delta_i(csl) * hbar * hbar / big_m
}
