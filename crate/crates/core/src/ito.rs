//! Raw (linear, unnormalised) Itô state-vector trajectories.
//!
//! Each channel c_k = √r_k A_k of a [`LindbladGenerator`] gets an
//! independent real Wiener increment; the raw equation
//!   dψ = [−(i/ℏ)H dt − ½Σc_k†c_k dt + Σc_k dW_k] ψ,   E[dW_k²] = dt,
//! has E[|ψ⟩⟨ψ|] obeying the master equation, so the plain ensemble mean of
//! the unnormalised projectors is the density matrix. At T = 0 the single
//! channel is √Λ X and this is dψ = (−(i/ℏ)H dt + X dW − (Λ/2)X†X dt)ψ with
//! E[dW²] = Λ dt.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::fock::{max_abs, DensityMatrix, FockError, OperatorMatrix, StateVector};
use crate::lindblad::{build_generator, check_time_grid, substeps, LindbladError, LindbladGenerator};
use crate::params::{ModelParams, ParamError};
use crate::sparse::Csr;

pub const NORM_FLOOR: f64 = 1e-6;
pub const NORM_CEILING: f64 = 1e6;
/// Fraction of resampled trajectories above which an ensemble is rejected.
pub const MAX_RESAMPLED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ItoError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("time step {dt} exceeds the bound {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("ensemble needs at least 100 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("{resampled} of {n_traj} trajectories left the norm window [1e-6, 1e6]; ensemble rejected")]
    Quality { resampled: usize, n_traj: usize },
    #[error("channel count {given} does not match the {expected} active jump operators")]
    Channels { given: usize, expected: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerConfig {
    /// Variance scale Λ of the T = 0 increment dW ~ N(0, Λdt).
    pub lambda: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub n_channels: usize,
}

impl WienerConfig {
    pub fn new(lambda: f64, dt: f64, master_seed: u64, n_channels: usize) -> Result<Self, ItoError> {
        ParamError::check_nonnegative("Lambda", lambda)?;
        ParamError::check_positive("dt", dt)?;
        Ok(WienerConfig { lambda, dt, master_seed, n_channels })
    }

    /// One increment dW ~ N(0, Λdt).
    pub fn increment<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.lambda * self.dt).sqrt() * z
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: splitmix64(master ⊕ splitmix64(index)), where
/// splitmix64 is the standard SplitMix64 finaliser (golden-ratio increment,
/// then the 30/27/31 xor-shift-multiply rounds).
pub fn trajectory_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One literal Euler–Maruyama step of the T = 0 raw equation, no renormalisation.
pub fn step_raw<R: Rng + ?Sized>(
    psi: &StateVector,
    x: &OperatorMatrix,
    h: &OperatorMatrix,
    cfg: &WienerConfig,
    rng: &mut R,
    hbar: f64,
) -> StateVector {
    let dw = cfg.increment(rng);
    let v = &psi.amplitudes;
    let xv = &x.matrix * v;
    let xdxv = x.matrix.adjoint() * &xv;
    let hv = &h.matrix * v;
    let out = v + hv * C64::new(0.0, -cfg.dt / hbar) + xv * C64::new(dw, 0.0) - xdxv * C64::new(0.5 * cfg.lambda * cfg.dt, 0.0);
    StateVector::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepScheme {
    /// ψ' = (1 + A dt)ψ + Σ c_k ψ ΔW_k, A = −(i/ℏ)H − ½Σc†c.
    EulerMaruyama,
    /// ψ' = e^{A dt}ψ + Σ c_k ψ ΔW_k: the drift is integrated exactly, the
    /// noise as in Euler–Maruyama. Same weak order, but stable at the step
    /// sizes the master equation uses.
    ExponentialEulerMaruyama,
}

/// A generator prepared for trajectory stepping at a fixed dt.
#[derive(Debug, Clone)]
pub struct Unraveling {
    pub scheme: StepScheme,
    pub dt: f64,
    drift: DMatrix<C64>,
    drift_sparse: Option<Csr>,
    channels: Vec<(Csr, DMatrix<C64>)>,
}

impl Unraveling {
    pub fn from_generator(gen: &LindbladGenerator, dt: f64, scheme: StepScheme) -> Result<Self, ItoError> {
        ParamError::check_positive("dt", dt)?;
        let d = gen.dim();
        let hbar = gen.hbar();
        let mut a = &gen.h.matrix * C64::new(0.0, -1.0 / hbar);
        let mut channels = Vec::new();
        for j in gen.jumps.iter().filter(|j| j.rate > 0.0) {
            let c = &j.op.matrix * C64::new(j.rate.sqrt(), 0.0);
            a -= c.adjoint() * &c * C64::new(0.5, 0.0);
            channels.push((Csr::from_dense(&c), c));
        }
        let (drift, drift_sparse) = match scheme {
            StepScheme::EulerMaruyama => {
                let m = DMatrix::identity(d, d) + a * C64::new(dt, 0.0);
                let s = Csr::from_dense(&m);
                (m, Some(s))
            }
            StepScheme::ExponentialEulerMaruyama => ((a * C64::new(dt, 0.0)).exp(), None),
        };
        Ok(Unraveling { scheme, dt, drift, drift_sparse, channels })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Advance by `h` (≤ dt; a shorter step needs its own drift only for the
    /// exponential scheme, so the runners always step at exactly dt).
    pub fn step<R: Rng + ?Sized>(&self, psi: &DVector<C64>, rng: &mut R) -> DVector<C64> {
        let mut out = match &self.drift_sparse {
            Some(s) => s.mul_vec(psi),
            None => &self.drift * psi,
        };
        let sq = self.dt.sqrt();
        for (c, _) in &self.channels {
            let z: f64 = rng.sample(StandardNormal);
            out += c.mul_vec(psi) * C64::new(sq * z, 0.0);
        }
        out
    }

    /// Exact one-step mean E[|ψ'⟩⟨ψ'|] given |ψ⟩⟨ψ| = ρ: BρB† + dt Σ cρc†.
    pub fn mean_map(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = &self.drift * rho * self.drift.adjoint();
        for (_, c) in &self.channels {
            out += c * rho * c.adjoint() * C64::new(self.dt, 0.0);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub index: usize,
    pub seed: u64,
    /// Raw states at the output times.
    pub states: Vec<StateVector>,
    pub norms_sqr: Vec<f64>,
    /// Restarts after leaving the norm window.
    pub resamples: u32,
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub times: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
    /// Mean of the raw projectors divided by its trace.
    pub reconstruction: Vec<DensityMatrix>,
    /// Per-entry standard error of `reconstruction`.
    pub stderr: Vec<DMatrix<f64>>,
    /// Mean and standard error of ‖ψ_raw‖².
    pub mean_norm_sqr: Vec<f64>,
    pub norm_sqr_stderr: Vec<f64>,
    /// Number of trajectories that needed at least one restart.
    pub resampled: usize,
}

fn run_one(un: &Unraveling, psi0: &DVector<C64>, t_grid: &[f64], master_seed: u64, index: usize) -> Trajectory {
    let seed = trajectory_seed(master_seed, index as u64);
    let mut resamples = 0u32;
    'attempt: loop {
        let attempt_seed = if resamples == 0 { seed } else { trajectory_seed(seed, resamples as u64) };
        let mut rng = trajectory_rng(attempt_seed);
        let mut psi = psi0.clone();
        let mut states = Vec::with_capacity(t_grid.len());
        let mut norms = Vec::with_capacity(t_grid.len());
        for (k, &t) in t_grid.iter().enumerate() {
            if k > 0 {
                let steps = ((t - t_grid[k - 1]) / un.dt).round() as usize;
                for _ in 0..steps {
                    psi = un.step(&psi, &mut rng);
                    let n2 = psi.norm_squared();
                    if !(NORM_FLOOR..=NORM_CEILING).contains(&n2) {
                        resamples += 1;
                        if resamples > 1000 {
                            // hopeless; report as it stands
                            break 'attempt Trajectory { index, seed, states, norms_sqr: norms, resamples };
                        }
                        continue 'attempt;
                    }
                }
            }
            norms.push(psi.norm_squared());
            states.push(StateVector::new(psi.clone()));
        }
        return Trajectory { index, seed, states, norms_sqr: norms, resamples };
    }
}

/// Ensemble from an explicit unraveling. Output spacings must be multiples of dt.
pub fn run_ensemble_with(
    un: &Unraveling,
    psi0: &StateVector,
    n_traj: usize,
    t_grid: &[f64],
    cfg: &WienerConfig,
) -> Result<TrajectoryEnsemble, ItoError> {
    if n_traj < 100 {
        return Err(ItoError::TooFewTrajectories(n_traj));
    }
    check_time_grid(t_grid)?;
    if psi0.dim() != un.dim() {
        return Err(ItoError::Shape(format!("state dimension {} vs {}", psi0.dim(), un.dim())));
    }
    if cfg.n_channels != un.n_channels() {
        return Err(ItoError::Channels { given: cfg.n_channels, expected: un.n_channels() });
    }
    if (cfg.dt - un.dt).abs() > 1e-15 * un.dt {
        return Err(ItoError::Shape("configuration dt differs from the unraveling dt".into()));
    }
    for w in t_grid.windows(2) {
        let (n, h) = substeps(w[1] - w[0], un.dt);
        if (h - un.dt).abs() > 1e-9 * un.dt {
            return Err(ItoError::Shape(format!("output spacing {} is not a multiple of dt = {} ({n} steps)", w[1] - w[0], un.dt)));
        }
    }
    let psi0v = psi0.amplitudes.clone();
    let trajectories: Vec<Trajectory> = (0..n_traj).into_par_iter().map(|i| run_one(un, &psi0v, t_grid, cfg.master_seed, i)).collect();
    let resampled = trajectories.iter().filter(|t| t.resamples > 0).count();
    if resampled as f64 > MAX_RESAMPLED_FRACTION * n_traj as f64 || trajectories.iter().any(|t| t.states.len() != t_grid.len()) {
        return Err(ItoError::Quality { resampled, n_traj });
    }

    let d = psi0.dim();
    let nf = n_traj as f64;
    let mut reconstruction = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    let mut mean_norm_sqr = Vec::with_capacity(t_grid.len());
    let mut norm_sqr_stderr = Vec::with_capacity(t_grid.len());
    for k in 0..t_grid.len() {
        // index-ordered accumulation: identical for every thread schedule
        let mut sum = DMatrix::<C64>::zeros(d, d);
        let mut sum_sq = DMatrix::<f64>::zeros(d, d);
        let (mut w1, mut w2) = (0.0, 0.0);
        for tr in &trajectories {
            let proj = tr.states[k].projector();
            sum_sq += proj.map(|z| z.norm_sqr());
            sum += proj;
            let w = tr.norms_sqr[k];
            w1 += w;
            w2 += w * w;
        }
        let mean = sum / C64::new(nf, 0.0);
        let tr = mean.trace().re;
        let var = DMatrix::from_fn(d, d, |i, j| ((sum_sq[(i, j)] / nf - mean[(i, j)].norm_sqr()) * nf / (nf - 1.0)).max(0.0));
        stderr.push(var.map(|v| (v / nf).sqrt() / tr));
        reconstruction.push(DensityMatrix::from_matrix_unchecked(mean / C64::new(tr, 0.0)));
        let mw = w1 / nf;
        mean_norm_sqr.push(mw);
        norm_sqr_stderr.push((((w2 / nf - mw * mw) * nf / (nf - 1.0)).max(0.0) / nf).sqrt());
    }
    Ok(TrajectoryEnsemble {
        n_traj,
        times: t_grid.to_vec(),
        trajectories,
        reconstruction,
        stderr,
        mean_norm_sqr,
        norm_sqr_stderr,
        resampled,
    })
}

/// Ensemble for the model's master equation on a d = dim(ψ₀) truncation,
/// exponential Euler–Maruyama at `cfg.dt`.
pub fn run_ensemble(
    params: &ModelParams,
    psi0: &StateVector,
    n_traj: usize,
    t_grid: &[f64],
    cfg: &WienerConfig,
) -> Result<TrajectoryEnsemble, ItoError> {
    let gen = build_generator(params, psi0.dim())?;
    let max = 0.01 / params.omega.max(params.damping());
    if cfg.dt > max * (1.0 + 1e-12) {
        return Err(ItoError::StepTooLarge { dt: cfg.dt, max });
    }
    if (cfg.lambda - params.lambda).abs() > 1e-12 * params.lambda.max(1e-300) {
        return Err(ItoError::Shape("WienerConfig.lambda differs from the model Lambda".into()));
    }
    let un = Unraveling::from_generator(&gen, cfg.dt, StepScheme::ExponentialEulerMaruyama)?;
    run_ensemble_with(&un, psi0, n_traj, t_grid, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingReport {
    /// max over times and entries of |mean(ψψ†) − mean(w ψ̂ψ̂†)|.
    pub max_abs_difference: f64,
    /// max |w − 1| over all trajectories and times.
    pub max_weight_deviation: f64,
    pub passed: bool,
}

/// Checks mean(|ψ_raw⟩⟨ψ_raw|) = mean(w|ψ̂⟩⟨ψ̂|), w = ‖ψ_raw‖², ψ̂ = ψ_raw/‖ψ_raw‖.
pub fn physical_weighting_check(ens: &TrajectoryEnsemble) -> WeightingReport {
    let mut max_diff: f64 = 0.0;
    let mut max_dev: f64 = 0.0;
    let nf = ens.trajectories.len() as f64;
    for k in 0..ens.times.len() {
        let d = ens.trajectories.first().map(|t| t.states[k].dim()).unwrap_or(0);
        let mut raw = DMatrix::<C64>::zeros(d, d);
        let mut phys = DMatrix::<C64>::zeros(d, d);
        for tr in &ens.trajectories {
            let s = &tr.states[k];
            let w = s.norm_sqr();
            raw += s.projector();
            phys += s.normalized().projector() * C64::new(w, 0.0);
            max_dev = max_dev.max((w - 1.0).abs());
        }
        max_diff = max_diff.max(max_abs(&((raw - phys) / C64::new(nf, 0.0))));
    }
    WeightingReport { max_abs_difference: max_diff, max_weight_deviation: max_dev, passed: max_diff <= 1e-12 }
}
