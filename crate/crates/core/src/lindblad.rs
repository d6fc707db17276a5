//! Master equation on a truncated Fock basis.
//!
//! The generator is stored as
//!   𝓛ρ = −(i/ℏ)(Gρ − ρG†) + Σ_k r_k A_k ρ A_k†,   G = H − (iℏ/2) Σ_k r_k A_k†A_k,
//! which is the usual Lindblad form with c_k = √r_k A_k and is trace
//! preserving exactly, even after truncation.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::fock::{cm_operators, free_cm_hamiltonian, kron, max_abs, DensityMatrix, FockError, InvariantReport, OperatorMatrix};
use crate::params::{ModelParams, ParamError};
use crate::sparse::Csr;

pub const TRACE_TOL: f64 = 1e-7;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-7;
/// Drift beyond this multiple of a tolerance aborts an evolution.
pub const FAILURE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LindbladError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("time step {dt} exceeds the stability bound {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("output times must be non-negative and strictly increasing")]
    BadTimeGrid,
    #[error(
        "integration failed at t = {time}: trace error {trace_error:e}, Hermiticity error {hermiticity_error:e}, \
         min eigenvalue {min_eigenvalue:e}; reduce dt"
    )]
    IntegrationFailure { time: f64, trace_error: f64, hermiticity_error: f64, min_eigenvalue: f64 },
    #[error("joint dimension {0} exceeds the budget of 4096")]
    DimensionBudget(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub op: OperatorMatrix,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub h: OperatorMatrix,
    pub jumps: Vec<JumpOperator>,
    hbar: f64,
    /// Fastest physical rate; the RK4 step must satisfy dt ≤ 0.01/fastest_rate.
    fastest_rate: f64,
    g: Csr,
    g_dag: Csr,
    jump_csr: Vec<(Csr, Csr, f64)>,
}

impl LindbladGenerator {
    pub fn new(h: OperatorMatrix, jumps: Vec<JumpOperator>, hbar: f64, fastest_rate: f64) -> Result<Self, LindbladError> {
        ParamError::check_positive("hbar", hbar)?;
        ParamError::check_positive("fastest_rate", fastest_rate)?;
        let d = h.dim();
        let mut k = DMatrix::<C64>::zeros(d, d);
        for j in &jumps {
            ParamError::check_nonnegative("rate", j.rate)?;
            if j.op.dim() != d {
                return Err(LindbladError::Shape(format!("jump operator {} has dimension {}", j.op.label, j.op.dim())));
            }
            k += j.op.matrix.adjoint() * &j.op.matrix * C64::new(j.rate, 0.0);
        }
        let g = &h.matrix - k * C64::new(0.0, 0.5 * hbar);
        let jump_csr = jumps
            .iter()
            .filter(|j| j.rate > 0.0)
            .map(|j| (Csr::from_dense(&j.op.matrix), Csr::from_dense(&j.op.matrix.adjoint()), j.rate))
            .collect();
        Ok(LindbladGenerator { g: Csr::from_dense(&g), g_dag: Csr::from_dense(&g.adjoint()), h, jumps, hbar, fastest_rate, jump_csr })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Largest admissible RK4 step.
    pub fn max_dt(&self) -> f64 {
        0.01 / self.fastest_rate
    }

    /// The same dissipator with H dropped.
    pub fn without_hamiltonian(&self) -> Result<Self, LindbladError> {
        let d = self.dim();
        Self::new(OperatorMatrix::new("0", DMatrix::zeros(d, d)), self.jumps.clone(), self.hbar, self.fastest_rate)
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let mi = C64::new(0.0, -1.0 / self.hbar);
        self.g.left_mul_acc(rho, mi, &mut out);
        self.g_dag.right_mul_acc(rho, -mi, &mut out);
        for (a, a_dag, rate) in &self.jump_csr {
            let t = a.left_mul(rho);
            a_dag.right_mul_acc(&t, C64::new(*rate, 0.0), &mut out);
        }
        out
    }

    /// Literal −(i/ℏ)[H,ρ] + Σ r(AρA† − ½{A†A, ρ}) with dense products; a
    /// reference for [`Self::apply`].
    pub fn apply_reference(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let h = &self.h.matrix;
        let mut out = (h * rho - rho * h) * C64::new(0.0, -1.0 / self.hbar);
        for j in &self.jumps {
            let a = &j.op.matrix;
            let ad = a.adjoint();
            let ada = &ad * a;
            out += (a * rho * &ad - (&ada * rho + rho * &ada) * C64::new(0.5, 0.0)) * C64::new(j.rate, 0.0);
        }
        out
    }

    /// Superoperator on column-stacked ρ: vec(AρB) = (Bᵀ ⊗ A) vec ρ.
    pub fn liouvillian(&self) -> DMatrix<C64> {
        let d = self.dim();
        let id = DMatrix::<C64>::identity(d, d);
        let h = &self.h.matrix;
        let mi = C64::new(0.0, -1.0 / self.hbar);
        let mut l = (kron(&id, h) - kron(&h.transpose(), &id)) * mi;
        for j in &self.jumps {
            let a = &j.op.matrix;
            let ada = a.adjoint() * a;
            let r = C64::new(j.rate, 0.0);
            l += (kron(&a.conjugate(), a) - (kron(&id, &ada) + kron(&ada.transpose(), &id)) * C64::new(0.5, 0.0)) * r;
        }
        l
    }
}

/// Master equation of the collective mode after collapsing the bath
/// spectrum onto ω: c₁ = √(ΛNn̄) b†, c₂ = √(ΛN(1 + n̄)) b, H = P²/(2M).
pub fn build_generator(params: &ModelParams, d: usize) -> Result<LindbladGenerator, LindbladError> {
    params.validate()?;
    let ops = cm_operators(params, d)?;
    let h = free_cm_hamiltonian(params, d)?;
    let nbar = params.nbar();
    let g = params.damping();
    let jumps = vec![JumpOperator { op: ops.b.dagger(), rate: g * nbar }, JumpOperator { op: ops.b.clone(), rate: g * (1.0 + nbar) }];
    let fastest = params.omega.max(g * (1.0 + 2.0 * nbar));
    LindbladGenerator::new(h, jumps, params.hbar(), fastest)
}

/// Collective mode ⊗ one resonant bath mode, coupled through the Hermitian
/// operator L = X†⊗a + X⊗a† at rate Λ, with H = H_cm⊗1 + 1⊗ℏωa†a.
/// Index order: cm major, bath minor.
pub fn build_joint_generator(params: &ModelParams, d_cm: usize, d_cbr: usize) -> Result<LindbladGenerator, LindbladError> {
    params.validate()?;
    let dim = d_cm * d_cbr;
    if dim > 4096 {
        return Err(LindbladError::DimensionBudget(dim));
    }
    let ops = cm_operators(params, d_cm)?;
    let h_cm = free_cm_hamiltonian(params, d_cm)?;
    let a = crate::fock::annihilation_matrix(d_cbr)?;
    let id_cm = DMatrix::<C64>::identity(d_cm, d_cm);
    let id_b = DMatrix::<C64>::identity(d_cbr, d_cbr);
    let n_b = a.matrix.adjoint() * &a.matrix;
    let h = kron(&h_cm.matrix, &id_b) + kron(&id_cm, &n_b) * C64::new(params.hbar() * params.omega, 0.0);
    let x = &ops.x.matrix;
    let l = kron(&x.adjoint(), &a.matrix) + kron(x, &a.matrix.adjoint());
    let l_norm = max_abs(&l);
    let fastest = params.omega.max(params.lambda * l_norm * l_norm);
    LindbladGenerator::new(
        OperatorMatrix::new("H", h),
        vec![JumpOperator { op: OperatorMatrix::new("L", l), rate: params.lambda }],
        params.hbar(),
        fastest,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Cm,
    Cbr,
}

pub fn partial_trace(rho: &DensityMatrix, d_cm: usize, d_cbr: usize, keep: Subsystem) -> Result<DensityMatrix, LindbladError> {
    if rho.dim() != d_cm * d_cbr {
        return Err(LindbladError::Shape(format!("{} != {d_cm}·{d_cbr}", rho.dim())));
    }
    let m = &rho.matrix;
    let out = match keep {
        Subsystem::Cm => DMatrix::from_fn(d_cm, d_cm, |i, j| (0..d_cbr).map(|k| m[(i * d_cbr + k, j * d_cbr + k)]).sum()),
        Subsystem::Cbr => DMatrix::from_fn(d_cbr, d_cbr, |i, j| (0..d_cm).map(|k| m[(k * d_cbr + i, k * d_cbr + j)]).sum()),
    };
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// tr(V·𝓛ρ).
pub fn ehrenfest_rate(gen: &LindbladGenerator, rho: &DensityMatrix, v: &OperatorMatrix) -> Result<f64, LindbladError> {
    if rho.dim() != gen.dim() || v.dim() != gen.dim() {
        return Err(LindbladError::Shape("operator, state and generator dimensions differ".into()));
    }
    Ok(crate::fock::trace_product(&v.matrix, &gen.apply(&rho.matrix)).re)
}

/// Tr(ρ − ρ²).
pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    rho.trace().re - rho.purity()
}

/// −Tr(ρ ln ρ); eigenvalues below −1e-8 are rejected, smaller negatives clipped.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64, LindbladError> {
    entropy_from_eigenvalues(&rho.eigenvalues())
}

fn entropy_from_eigenvalues(ev: &[f64]) -> Result<f64, LindbladError> {
    let mut s = 0.0;
    for &l in ev {
        if l < -1e-8 {
            return Err(LindbladError::InvalidState(format!("eigenvalue {l:e} below -1e-8")));
        }
        if l > 0.0 {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Named expectation values recorded along an evolution.
#[derive(Debug, Clone, Default)]
pub struct ObservableSet {
    pub ops: Vec<(String, OperatorMatrix)>,
}

impl ObservableSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Q, P, Q², {Q,P}, P² and K = P²/(2M).
    pub fn cm(params: &ModelParams, d: usize) -> Result<Self, LindbladError> {
        let ops = cm_operators(params, d)?;
        let q2 = ops.q.product(&ops.q);
        let p2 = ops.p.product(&ops.p);
        let qp = ops.q.anticommutator(&ops.p);
        let k = OperatorMatrix::new("K", &p2.matrix * C64::new(0.5 / params.big_m, 0.0));
        Ok(ObservableSet {
            ops: vec![("Q".into(), ops.q), ("P".into(), ops.p), ("Q2".into(), q2), ("QP".into(), qp), ("P2".into(), p2), ("K".into(), k)],
        })
    }
}

pub const STATE_OBSERVABLES: [&str; 3] = ["purity", "S_l", "S_s"];

#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Series in recording order; operator observables first, then purity, S_l, S_s.
    pub observables: Vec<(String, Vec<f64>)>,
    pub invariants: Vec<InvariantReport>,
}

impl EvolutionRecord {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// True when every output passed the trace, Hermiticity and positivity gates.
    pub fn gates_passed(&self) -> bool {
        self.invariants
            .iter()
            .all(|r| r.trace_error <= TRACE_TOL && r.hermiticity_error <= HERMITICITY_TOL && r.min_eigenvalue >= -POSITIVITY_TOL)
    }

    /// Worst case of each invariant over all outputs.
    pub fn worst_invariants(&self) -> InvariantReport {
        self.invariants.iter().fold(InvariantReport { trace_error: 0.0, hermiticity_error: 0.0, min_eigenvalue: f64::INFINITY }, |a, r| {
            InvariantReport {
                trace_error: a.trace_error.max(r.trace_error),
                hermiticity_error: a.hermiticity_error.max(r.hermiticity_error),
                min_eigenvalue: if a.min_eigenvalue.is_nan() || r.min_eigenvalue.is_nan() {
                    f64::NAN
                } else {
                    a.min_eigenvalue.min(r.min_eigenvalue)
                },
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Rk4 {
    pub dt: f64,
}

pub(crate) fn rk4_step<F: Fn(&DMatrix<C64>) -> DMatrix<C64>>(f: &F, y: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
    let hc = |s: f64| C64::new(s * h, 0.0);
    let k1 = f(y);
    let k2 = f(&(y + &k1 * hc(0.5)));
    let k3 = f(&(y + &k2 * hc(0.5)));
    let k4 = f(&(y + &k3 * hc(1.0)));
    y + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * hc(1.0 / 6.0)
}

pub(crate) fn check_time_grid(t_grid: &[f64]) -> Result<(), LindbladError> {
    if t_grid.is_empty() || t_grid[0] < 0.0 || t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LindbladError::BadTimeGrid);
    }
    Ok(())
}

/// Steps between consecutive outputs, shortened so each output is hit exactly.
pub(crate) fn substeps(span: f64, dt: f64) -> (usize, f64) {
    let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Fixed-step RK4 from t_grid[0] (the time of ρ₀) through every output time.
pub fn evolve_master(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    stepper: Rk4,
    observables: &ObservableSet,
) -> Result<EvolutionRecord, LindbladError> {
    check_time_grid(t_grid)?;
    if rho0.dim() != gen.dim() {
        return Err(LindbladError::Shape(format!("state dimension {} vs generator {}", rho0.dim(), gen.dim())));
    }
    if stepper.dt.is_nan() || stepper.dt <= 0.0 || stepper.dt > gen.max_dt() * (1.0 + 1e-12) {
        return Err(LindbladError::StepTooLarge { dt: stepper.dt, max: gen.max_dt() });
    }
    let mut rec = EvolutionRecord {
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        observables: observables
            .ops
            .iter()
            .map(|(n, _)| n.clone())
            .chain(STATE_OBSERVABLES.iter().map(|s| s.to_string()))
            .map(|n| (n, Vec::with_capacity(t_grid.len())))
            .collect(),
        invariants: Vec::with_capacity(t_grid.len()),
    };
    let f = |r: &DMatrix<C64>| gen.apply(r);
    let mut rho = rho0.matrix.clone();
    let mut t = t_grid[0];
    for (idx, &t_out) in t_grid.iter().enumerate() {
        if idx > 0 {
            let (n, h) = substeps(t_out - t, stepper.dt);
            for _ in 0..n {
                rho = rk4_step(&f, &rho, h);
            }
            t = t_out;
        }
        let state = DensityMatrix::from_matrix_unchecked(rho.clone());
        let ev = state.eigenvalues();
        let report = InvariantReport {
            trace_error: (state.trace() - C64::new(1.0, 0.0)).norm(),
            hermiticity_error: max_abs(&(&rho - rho.adjoint())),
            min_eigenvalue: ev.first().copied().unwrap_or(0.0),
        };
        if report.trace_error > FAILURE_FACTOR * TRACE_TOL
            || report.hermiticity_error > FAILURE_FACTOR * HERMITICITY_TOL
            || report.min_eigenvalue < -FAILURE_FACTOR * POSITIVITY_TOL
            || !report.trace_error.is_finite()
            || report.min_eigenvalue.is_nan()
        {
            return Err(LindbladError::IntegrationFailure {
                time: t,
                trace_error: report.trace_error,
                hermiticity_error: report.hermiticity_error,
                min_eigenvalue: report.min_eigenvalue,
            });
        }
        let nops = observables.ops.len();
        for (k, (_, op)) in observables.ops.iter().enumerate() {
            rec.observables[k].1.push(state.expect(op).re);
        }
        let purity = state.purity();
        rec.observables[nops].1.push(purity);
        rec.observables[nops + 1].1.push(state.trace().re - purity);
        let clipped: Vec<f64> = ev.iter().map(|&l| l.max(0.0)).collect();
        rec.observables[nops + 2].1.push(entropy_from_eigenvalues(&clipped)?);
        rec.times.push(t);
        rec.states.push(state);
        rec.invariants.push(report);
    }
    Ok(rec)
}
