//! Finite-difference solver for ρ(Q, Q′, t) in one dimension:
//!
//!   ∂ρ/∂t = (iℏ/2M)(∂²_Q − ∂²_Q′)ρ − 𝓓(Q − Q′)²ρ + 𝓓(ℏ/Mω)²(∂_Q + ∂_Q′)²ρ
//!           + (NΛ/2)[(Q∂_Q′ + Q′∂_Q) + 1]ρ.
//!
//! In r = (Q + Q′)/2, s = Q − Q′ the drift is (NΛ/2)(r∂_r − s∂_s + 1), which
//! conserves the trace and damps ⟨Q⟩ at NΛ/2. Derivatives along r and s use
//! the diagonal neighbours, so on the grid the diagonal sum of every term
//! telescopes and the discrete trace is conserved up to wall terms; every
//! stencil maps Hermitian grids to Hermitian grids.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::oracles::diffusion_constant;
use crate::params::{ModelParams, ParamError};

/// Minimum samples per Gaussian width.
pub const MIN_POINTS_PER_WIDTH: f64 = 8.0;
/// Diagonal mass allowed in the outer 5% of each axis.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("grid needs n >= 64 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("initial width is resolved by {0:.2} points, need at least 8")]
    Resolution(f64),
    #[error("time step {dt} exceeds the stability bound {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("output times must be non-negative and strictly increasing")]
    BadTimeGrid,
    #[error("boundary mass {mass:e} at t = {time} exceeds 1e-6; enlarge the domain")]
    DomainTooSmall { time: f64, mass: f64 },
    #[error("|rho(Qa, Qb, 0)| = {0:e} is below the 1e-8 noise floor")]
    NoiseFloor(f64),
    #[error("poor exponential fit (R² = {0:.5}); shorten the window")]
    PoorFit(f64),
    #[error("point ({qa}, {qb}) lies outside the grid")]
    OutsideGrid { qa: f64, qb: f64 },
    #[error("fit needs at least 3 output times")]
    TooFewTimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    DirichletZero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Half-width: the axes run over [−L, L].
    pub half_width: f64,
    pub n: usize,
    pub bc: Boundary,
}

impl GridSpec {
    pub fn new(half_width: f64, n: usize) -> Result<Self, GridError> {
        ParamError::check_positive("L", half_width)?;
        if n < 64 {
            return Err(GridError::TooFewPoints(n));
        }
        Ok(GridSpec { half_width, n, bc: Boundary::DirichletZero })
    }

    pub fn dq(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn q(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dq()
    }

    pub fn check_resolution(&self, width: f64) -> Result<(), GridError> {
        let pts = width / self.dq();
        if pts < MIN_POINTS_PER_WIDTH * (1.0 - 1e-9) {
            return Err(GridError::Resolution(pts));
        }
        Ok(())
    }
}

/// ρ(Q_j, Q′_k), row-major in j.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub spec: GridSpec,
    pub values: Vec<C64>,
}

impl GridDensity {
    pub fn zeros(spec: GridSpec) -> Self {
        GridDensity { spec, values: vec![C64::new(0.0, 0.0); spec.n * spec.n] }
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> C64 {
        self.values[j * self.spec.n + k]
    }

    /// |ψ⟩⟨ψ| for a sampled wavefunction, normalised so Σ|ψ_j|² dQ = 1.
    pub fn from_wavefunction<F: Fn(f64) -> C64>(spec: GridSpec, psi: F) -> Self {
        let n = spec.n;
        let dq = spec.dq();
        let v: Vec<C64> = (0..n).map(|j| psi(spec.q(j))).collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq;
        let mut out = Self::zeros(spec);
        for j in 0..n {
            for k in 0..n {
                out.values[j * n + k] = v[j] * v[k].conj() / norm;
            }
        }
        out
    }

    /// Real Gaussian packet with |ψ|² of standard deviation `sigma`.
    pub fn gaussian(spec: GridSpec, center: f64, sigma: f64, momentum: f64, hbar: f64) -> Result<Self, GridError> {
        ParamError::check_positive("sigma", sigma)?;
        spec.check_resolution(sigma)?;
        Ok(Self::from_wavefunction(spec, |q| {
            let x = q - center;
            C64::from_polar((-x * x / (4.0 * sigma * sigma)).exp(), momentum * q / hbar)
        }))
    }

    /// Balanced superposition of Gaussians at center ± separation/2.
    pub fn cat(spec: GridSpec, center: f64, separation: f64, sigma: f64) -> Result<Self, GridError> {
        ParamError::check_positive("sigma", sigma)?;
        ParamError::check_nonnegative("separation", separation)?;
        spec.check_resolution(sigma)?;
        let a = 0.5 * separation;
        Ok(Self::from_wavefunction(spec, |q| {
            let g = |x: f64| (-x * x / (4.0 * sigma * sigma)).exp();
            C64::new(g(q - center - a) + g(q - center + a), 0.0)
        }))
    }

    pub fn trace(&self) -> f64 {
        let n = self.spec.n;
        (0..n).map(|j| self.values[j * n + j].re).sum::<f64>() * self.spec.dq()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.spec.n;
        let mut e: f64 = 0.0;
        for j in 0..n {
            for k in j..n {
                e = e.max((self.values[j * n + k] - self.values[k * n + j].conj()).norm());
            }
        }
        e
    }

    pub fn min_diagonal(&self) -> f64 {
        let n = self.spec.n;
        (0..n).map(|j| self.values[j * n + j].re).fold(f64::INFINITY, f64::min)
    }

    /// Tr ρ² of the represented operator.
    pub fn purity(&self) -> f64 {
        let dq = self.spec.dq();
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dq * dq
    }

    /// Diagonal mass in the outer 5% of the axis at either end.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.spec.n;
        let band = ((0.05 * n as f64).ceil() as usize).max(1);
        (0..n).filter(|&j| j < band || j >= n - band).map(|j| self.values[j * n + j].re.abs()).sum::<f64>() * self.spec.dq()
    }

    /// Diagonal mass farther than L/2 from the centre.
    pub fn outer_half_mass(&self) -> f64 {
        let n = self.spec.n;
        let l = self.spec.half_width;
        (0..n).filter(|&j| self.spec.q(j).abs() > 0.5 * l).map(|j| self.values[j * n + j].re.abs()).sum::<f64>() * self.spec.dq()
    }

    pub fn mean_q(&self) -> f64 {
        let n = self.spec.n;
        (0..n).map(|j| self.spec.q(j) * self.values[j * n + j].re).sum::<f64>() * self.spec.dq()
    }

    pub fn var_q(&self) -> f64 {
        let n = self.spec.n;
        let m = self.mean_q();
        (0..n).map(|j| (self.spec.q(j) - m).powi(2) * self.values[j * n + j].re).sum::<f64>() * self.spec.dq()
    }

    /// ρ at an arbitrary point by bilinear interpolation (exact on nodes).
    pub fn value_at(&self, qa: f64, qb: f64) -> Result<C64, GridError> {
        let s = &self.spec;
        let fa = (qa + s.half_width) / s.dq();
        let fb = (qb + s.half_width) / s.dq();
        let last = (s.n - 1) as f64;
        if !(0.0..=last).contains(&fa) || !(0.0..=last).contains(&fb) {
            return Err(GridError::OutsideGrid { qa, qb });
        }
        let snap = |f: f64| if (f - f.round()).abs() < 1e-9 { f.round() } else { f };
        let (fa, fb) = (snap(fa), snap(fb));
        let (ja, jb) = ((fa.floor() as usize).min(s.n - 2), (fb.floor() as usize).min(s.n - 2));
        let (ta, tb) = (fa - ja as f64, fb - jb as f64);
        Ok(self.at(ja, jb) * ((1.0 - ta) * (1.0 - tb))
            + self.at(ja + 1, jb) * (ta * (1.0 - tb))
            + self.at(ja, jb + 1) * ((1.0 - ta) * tb)
            + self.at(ja + 1, jb + 1) * (ta * tb))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftConvention {
    /// (NΛ/2)(r∂_r − s∂_s + 1): conserves the trace, ⟨Q⟩ decays at NΛ/2.
    #[default]
    TraceConserving,
    /// (NΛ/2)(−r∂_r + s∂_s + 1).
    Literal,
}

/// Coefficients of the discretised right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct GridOperator {
    pub spec: GridSpec,
    /// iℏ/(2M dQ²)
    kinetic: C64,
    /// 𝓓
    decoherence: f64,
    /// 𝓓(ℏ/Mω)²/dQ²
    diffusion: f64,
    /// NΛ/2 on the derivative part
    drift: f64,
    /// NΛ/2
    offset: f64,
    hbar_over_m: f64,
}

pub fn build_rhs(params: &ModelParams, spec: GridSpec) -> Result<GridOperator, GridError> {
    build_rhs_with(params, spec, DriftConvention::TraceConserving)
}

pub fn build_rhs_with(params: &ModelParams, spec: GridSpec, drift: DriftConvention) -> Result<GridOperator, GridError> {
    params.validate()?;
    let dq = spec.dq();
    let hbar = params.hbar();
    let big_m = params.big_m;
    let dd = diffusion_constant(params);
    let len = hbar / (big_m * params.omega);
    Ok(GridOperator {
        spec,
        kinetic: C64::new(0.0, hbar / (2.0 * big_m * dq * dq)),
        decoherence: dd,
        diffusion: dd * len * len / (dq * dq),
        drift: match drift {
            DriftConvention::TraceConserving => 0.5 * params.damping(),
            DriftConvention::Literal => -0.5 * params.damping(),
        },
        offset: 0.5 * params.damping(),
        hbar_over_m: hbar / big_m,
    })
}

impl GridOperator {
    /// Largest admissible step: 0.2 dQ² M/ℏ, tightened so that the stiffest
    /// non-kinetic rate (𝓓(2L)² at the corners plus diffusion and drift)
    /// times dt stays below 2, inside the RK4 stability region.
    pub fn max_dt(&self) -> f64 {
        let dq = self.spec.dq();
        let l = self.spec.half_width;
        let kinetic = 0.2 * dq * dq / self.hbar_over_m;
        let stiff = self.decoherence * 4.0 * l * l + 4.0 * self.diffusion + self.drift.abs() * 2.0 * l / dq + self.offset;
        if stiff > 0.0 {
            kinetic.min(2.0 / stiff)
        } else {
            kinetic
        }
    }

    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let n = self.spec.n;
        let dq = self.spec.dq();
        let get = |j: isize, k: isize| -> C64 {
            if j < 0 || k < 0 || j >= n as isize || k >= n as isize {
                C64::new(0.0, 0.0)
            } else {
                rho[j as usize * n + k as usize]
            }
        };
        let q: Vec<f64> = (0..n).map(|j| self.spec.q(j)).collect();
        let (half_inv, quarter_inv) = (0.5 / dq, 0.25 / dq);
        for j in 0..n {
            let ji = j as isize;
            for k in 0..n {
                let ki = k as isize;
                let c = rho[j * n + k];
                let (pp, mm) = (get(ji + 1, ki + 1), get(ji - 1, ki - 1));
                let (pm, mp) = (get(ji + 1, ki - 1), get(ji - 1, ki + 1));
                let kin = self.kinetic * (get(ji + 1, ki) + get(ji - 1, ki) - get(ji, ki + 1) - get(ji, ki - 1));
                let s = q[j] - q[k];
                let r = 0.5 * (q[j] + q[k]);
                let diff = (pp - c * 2.0 + mm) * self.diffusion;
                let drift = ((pp - mm) * (r * half_inv) - (pm - mp) * (s * quarter_inv)) * self.drift + c * self.offset;
                out[j * n + k] = kin - c * (self.decoherence * s * s) + diff + drift;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    pub trace: f64,
    pub hermiticity_error: f64,
    pub min_diagonal: f64,
    pub boundary_mass: f64,
    pub outer_half_mass: f64,
    pub purity: f64,
}

impl GridStats {
    pub fn of(rho: &GridDensity) -> Self {
        GridStats {
            trace: rho.trace(),
            hermiticity_error: rho.hermiticity_error(),
            min_diagonal: rho.min_diagonal(),
            boundary_mass: rho.boundary_mass(),
            outer_half_mass: rho.outer_half_mass(),
            purity: rho.purity(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSeries {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridDensity>,
    pub stats: Vec<GridStats>,
}

/// RK4 through every output time; fails if mass reaches the walls.
pub fn evolve_grid(op: &GridOperator, rho0: &GridDensity, t_grid: &[f64], dt: f64) -> Result<GridSeries, GridError> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.iter().any(|t| t.is_nan()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GridError::BadTimeGrid);
    }
    if dt.is_nan() || dt <= 0.0 || dt > op.max_dt() * (1.0 + 1e-12) {
        return Err(GridError::StepTooLarge { dt, max: op.max_dt() });
    }
    let len = rho0.values.len();
    let mut y = rho0.values.clone();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![C64::default(); len], vec![C64::default(); len], vec![C64::default(); len], vec![C64::default(); len]);
    let mut tmp = vec![C64::default(); len];
    let mut series = GridSeries { times: Vec::new(), snapshots: Vec::new(), stats: Vec::new() };
    let mut t = t_grid[0];
    for (idx, &t_out) in t_grid.iter().enumerate() {
        if idx > 0 {
            let span = t_out - t;
            let nsteps = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / nsteps as f64;
            for _ in 0..nsteps {
                op.apply(&y, &mut k1);
                for i in 0..len {
                    tmp[i] = y[i] + k1[i] * (0.5 * h);
                }
                op.apply(&tmp, &mut k2);
                for i in 0..len {
                    tmp[i] = y[i] + k2[i] * (0.5 * h);
                }
                op.apply(&tmp, &mut k3);
                for i in 0..len {
                    tmp[i] = y[i] + k3[i] * h;
                }
                op.apply(&tmp, &mut k4);
                for i in 0..len {
                    y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
                }
            }
            t = t_out;
        }
        let snap = GridDensity { spec: rho0.spec, values: y.clone() };
        let stats = GridStats::of(&snap);
        if stats.boundary_mass > BOUNDARY_MASS_LIMIT {
            return Err(GridError::DomainTooSmall { time: t, mass: stats.boundary_mass });
        }
        series.times.push(t);
        series.stats.push(stats);
        series.snapshots.push(snap);
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Fitted ζ: minus the slope of ln|ρ(Qa, Qb, t)|.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of `rate`.
    pub rate_stderr: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub delta_q: f64,
}

/// Least-squares slope of ln|ρ(Qa, Qb, t)| against t over the whole series.
pub fn fit_offdiag_decay(series: &GridSeries, qa: f64, qb: f64) -> Result<DecayFit, GridError> {
    let m = series.times.len();
    if m < 3 {
        return Err(GridError::TooFewTimes);
    }
    let mut ys = Vec::with_capacity(m);
    for snap in &series.snapshots {
        ys.push(snap.value_at(qa, qb)?.norm());
    }
    if ys[0] < 1e-8 {
        return Err(GridError::NoiseFloor(ys[0]));
    }
    let ys: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let ts = &series.times;
    let mf = m as f64;
    let tbar = ts.iter().sum::<f64>() / mf;
    let ybar = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = ts.iter().map(|t| (t - tbar).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tbar) * (y - ybar)).sum();
    let syy: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let sse: f64 = ts.iter().zip(&ys).map(|(t, y)| (y - intercept - slope * t).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let resid_var = sse / (mf - 2.0);
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r_squared,
        rate_stderr: (resid_var / sxx).sqrt(),
        residual: (sse / mf).sqrt(),
        delta_q: (qa - qb).abs(),
    })
}

/// As [`fit_offdiag_decay`], rejecting fits with R² < 0.99.
pub fn fit_offdiag_decay_checked(series: &GridSeries, qa: f64, qb: f64) -> Result<DecayFit, GridError> {
    let fit = fit_offdiag_decay(series, qa, qb)?;
    if fit.r_squared < 0.99 && fit.delta_q > 0.0 {
        return Err(GridError::PoorFit(fit.r_squared));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(7.9375, 128).unwrap()
    }

    fn hermitian_ish(spec: GridSpec) -> GridDensity {
        let n = spec.n;
        let mut g = GridDensity::zeros(spec);
        let mut s: u64 = 77;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for j in 0..n {
            for k in j..n {
                let v = if j == k { C64::new(next(), 0.0) } else { C64::new(next(), next()) };
                g.values[j * n + k] = v;
                g.values[k * n + j] = v.conj();
            }
        }
        g
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(GridSpec::new(1.0, 32), Err(GridError::TooFewPoints(32))));
        let s = spec();
        assert!((s.dq() - 0.125).abs() < 1e-15);
        assert!(s.check_resolution(1.0).is_ok());
        assert!(matches!(s.check_resolution(0.9), Err(GridError::Resolution(_))));
    }

    #[test]
    fn operator_keeps_hermiticity_and_trace() {
        let p = ModelParams::engine(10.0, 0.001, 0.5).unwrap();
        let s = spec();
        let op = build_rhs(&p, s).unwrap();
        let g = hermitian_ish(s);
        let mut out = vec![C64::default(); s.n * s.n];
        op.apply(&g.values, &mut out);
        let h = GridDensity { spec: s, values: out };
        assert!(h.hermiticity_error() < 1e-12);

        // with a localised state the wall terms vanish
        let cat = GridDensity::cat(s, 0.0625, 4.0, 1.0).unwrap();
        let mut out = vec![C64::default(); s.n * s.n];
        op.apply(&cat.values, &mut out);
        let dtr = GridDensity { spec: s, values: out }.trace();
        assert!(dtr.abs() < 1e-8, "{dtr}");
    }

    #[test]
    fn diagonal_immune_to_decoherence_term() {
        // the (Q − Q′)² factor vanishes for j = k
        let p = ModelParams::engine(10.0, 0.001, 0.5).unwrap();
        let s = spec();
        let full = build_rhs(&p, s).unwrap();
        let mut only = full;
        only.kinetic = C64::new(0.0, 0.0);
        only.diffusion = 0.0;
        only.drift = 0.0;
        only.offset = 0.0;
        let g = hermitian_ish(s);
        let mut out = vec![C64::default(); s.n * s.n];
        only.apply(&g.values, &mut out);
        for j in 0..s.n {
            assert_eq!(out[j * s.n + j], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn free_packet_spreads_like_free_flight() {
        let p = ModelParams::engine(1.0, 0.0, 0.0).unwrap();
        let s = GridSpec::new(10.0, 168).unwrap();
        let sigma = 1.0;
        let rho0 = GridDensity::gaussian(s, 0.5, sigma, 0.0, 1.0).unwrap();
        let op = build_rhs(&p, s).unwrap();
        let t = [0.0, 0.5, 1.0, 1.5];
        let series = evolve_grid(&op, &rho0, &t, op.max_dt()).unwrap();
        for (k, snap) in series.snapshots.iter().enumerate() {
            let tt = t[k];
            // ⟨Q²⟩ − ⟨Q⟩² = σ² + (ℏt/(2Mσ))² for a real packet
            let expect = sigma * sigma + (tt / (2.0 * sigma)).powi(2);
            assert!((snap.var_q() - expect).abs() < 2e-3 * expect, "t={tt}: {} vs {expect}", snap.var_q());
            assert!((series.stats[k].purity - 1.0).abs() < 1e-6);
            assert!(series.stats[k].hermiticity_error < 1e-12);
        }
    }

    #[test]
    fn offdiagonal_decays_diagonal_persists() {
        let p = ModelParams::engine(10.0, 0.001, 0.5).unwrap();
        let s = spec();
        let c = 0.0625;
        let rho0 = GridDensity::cat(s, c, 4.0, 1.0).unwrap();
        let op = build_rhs(&p, s).unwrap();
        let t: Vec<f64> = (0..11).map(|k| 0.01 * k as f64).collect();
        let series = evolve_grid(&op, &rho0, &t, op.max_dt()).unwrap();
        let off = fit_offdiag_decay_checked(&series, c + 2.0, c - 2.0).unwrap();
        let zeta = crate::oracles::offdiag_decay_rate(&p, 4.0);
        assert!(((off.rate - zeta) / zeta).abs() < 0.05, "{} vs {zeta}", off.rate);
        let diag = fit_offdiag_decay_checked(&series, c + 2.0, c + 2.0).unwrap();
        assert!(diag.rate.abs() <= p.damping(), "{}", diag.rate);
        for st in &series.stats {
            assert!(st.min_diagonal >= -1e-8);
            assert!((st.trace - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn literal_drift_grows_the_trace() {
        let p = ModelParams::engine(10.0, 0.01, 0.5).unwrap();
        let s = spec();
        let cat = GridDensity::cat(s, 0.0625, 4.0, 1.0).unwrap();
        let rate = |conv| {
            let op = build_rhs_with(&p, s, conv).unwrap();
            let mut out = vec![C64::default(); s.n * s.n];
            op.apply(&cat.values, &mut out);
            GridDensity { spec: s, values: out }.trace()
        };
        assert!(rate(DriftConvention::TraceConserving).abs() < 1e-8);
        assert!((rate(DriftConvention::Literal) - p.damping()).abs() < 1e-8);
    }

    #[test]
    fn mean_position_decays_at_half_damping() {
        let p = ModelParams::engine(10.0, 0.01, 0.5).unwrap();
        let s = spec();
        let g = GridDensity::gaussian(s, 1.0, 1.0, 0.0, 1.0).unwrap();
        let op = build_rhs(&p, s).unwrap();
        let mut out = vec![C64::default(); s.n * s.n];
        op.apply(&g.values, &mut out);
        let d = GridDensity { spec: s, values: out };
        let dq_mean: f64 = (0..s.n).map(|j| s.q(j) * d.at(j, j).re).sum::<f64>() * s.dq();
        assert!((dq_mean + 0.5 * p.damping() * g.mean_q()).abs() < 1e-8, "{dq_mean}");
    }

    #[test]
    fn domain_guard() {
        let p = ModelParams::engine(1.0, 0.0, 0.0).unwrap();
        let s = GridSpec::new(3.9, 64).unwrap();
        let rho0 = GridDensity::gaussian(s, 3.0, 1.0, 0.0, 1.0).unwrap();
        let op = build_rhs(&p, s).unwrap();
        assert!(matches!(evolve_grid(&op, &rho0, &[0.0, 0.1], op.max_dt()), Err(GridError::DomainTooSmall { .. })));
        assert!(matches!(evolve_grid(&op, &rho0, &[0.0, 0.1], 1.0), Err(GridError::StepTooLarge { .. })));
    }
}
