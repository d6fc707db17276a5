//! Truncated Fock-basis operators and states for the centre-of-mass mode.
//!
//! With b the annihilator of the mode, the collective coordinates are
//! X = √N b, Q = √(ℏ/2mω)(b + b†)/√N and P = −i√(ℏmω/2)√N(b − b†), so that
//! X = (NmωQ + iP)/√(2ℏmω) and [X, X†] = N on the untruncated space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::params::{ModelParams, ParamError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    #[error("truncation d = {d} is too small (need at least {min})")]
    DimTooSmall { d: usize, min: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Dense operator with a short label for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub label: String,
    pub matrix: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn new(label: impl Into<String>, matrix: DMatrix<C64>) -> Self {
        OperatorMatrix { label: label.into(), matrix }
    }

    pub fn identity(d: usize) -> Self {
        Self::new("I", DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self::new(format!("{}†", self.label), self.matrix.adjoint())
    }

    /// max|A − A†|.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// Hermiticity gate: max|A − A†| ≤ 1e-12·max|A|.
    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= 1e-12 * self.max_abs()
    }

    pub fn product(&self, other: &OperatorMatrix) -> OperatorMatrix {
        Self::new(format!("{}{}", self.label, other.label), &self.matrix * &other.matrix)
    }

    pub fn anticommutator(&self, other: &OperatorMatrix) -> OperatorMatrix {
        Self::new(format!("{{{},{}}}", self.label, other.label), &self.matrix * &other.matrix + &other.matrix * &self.matrix)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(amplitudes: DVector<C64>) -> Self {
        StateVector { amplitudes }
    }

    pub fn basis(d: usize, k: usize) -> Self {
        let mut v = DVector::zeros(d);
        v[k] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalized(&self) -> Self {
        Self::new(&self.amplitudes / C64::new(self.amplitudes.norm(), 0.0))
    }

    /// |ψ⟩⟨ψ| without renormalisation.
    pub fn projector(&self) -> DMatrix<C64> {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_matrix_unchecked(self.normalized().projector())
    }

    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)) / C64::new(self.norm_sqr(), 0.0)
    }
}

/// Invariant diagnostics of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantReport {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Checked constructor: Hermitian to 1e-10, trace 1 to 1e-8, eigenvalues ≥ −1e-8.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self, FockError> {
        if !matrix.is_square() {
            return Err(FockError::Shape("density matrix must be square".into()));
        }
        let rho = DensityMatrix { matrix };
        let r = rho.invariants();
        if r.hermiticity_error > 1e-10 {
            return Err(FockError::InvalidState(format!("not Hermitian ({:e})", r.hermiticity_error)));
        }
        if r.trace_error > 1e-8 {
            return Err(FockError::InvalidState(format!("trace off by {:e}", r.trace_error)));
        }
        if r.min_eigenvalue < -1e-8 {
            return Err(FockError::InvalidState(format!("negative eigenvalue {:e}", r.min_eigenvalue)));
        }
        Ok(rho)
    }

    pub fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        DensityMatrix { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        trace_product(&self.matrix, &op.matrix)
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        // entries spanning hundreds of decades make the QR sweep produce NaN;
        // dropping those below 1e-30 of the largest moves no eigenvalue visibly
        let floor = 1e-30 * max_abs(&h);
        let h = h.map(|z| if z.norm() < floor { C64::new(0.0, 0.0) } else { z });
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn invariants(&self) -> InvariantReport {
        InvariantReport {
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            hermiticity_error: max_abs(&(&self.matrix - self.matrix.adjoint())),
            min_eigenvalue: self.eigenvalues().first().copied().unwrap_or(0.0),
        }
    }

    /// ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = DensityMatrix::from_matrix_unchecked(&self.matrix - &other.matrix);
        0.5 * diff.eigenvalues().iter().map(|e| e.abs()).sum::<f64>()
    }
}

/// tr(AB) without forming the product.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let d = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

pub fn annihilation_matrix(d: usize) -> Result<OperatorMatrix, FockError> {
    if d < 2 {
        return Err(FockError::DimTooSmall { d, min: 2 });
    }
    let mut b = DMatrix::zeros(d, d);
    for i in 0..d - 1 {
        b[(i, i + 1)] = C64::new(((i + 1) as f64).sqrt(), 0.0);
    }
    Ok(OperatorMatrix::new("b", b))
}

/// Collective-mode operators on a d-level truncation.
#[derive(Debug, Clone)]
pub struct CmOperators {
    pub q: OperatorMatrix,
    pub p: OperatorMatrix,
    pub x: OperatorMatrix,
    pub b: OperatorMatrix,
}

pub fn cm_operators(params: &ModelParams, d: usize) -> Result<CmOperators, FockError> {
    params.validate()?;
    if d < 4 {
        return Err(FockError::DimTooSmall { d, min: 4 });
    }
    let b = annihilation_matrix(d)?;
    let bd = b.matrix.adjoint();
    let (hbar, m, w, n) = (params.hbar(), params.m, params.omega, params.n_particles);
    let q = (&b.matrix + &bd) * C64::new((hbar / (2.0 * m * w)).sqrt() / n.sqrt(), 0.0);
    let p = (&b.matrix - &bd) * C64::new(0.0, -(hbar * m * w / 2.0).sqrt() * n.sqrt());
    let x = &b.matrix * C64::new(n.sqrt(), 0.0);
    Ok(CmOperators { q: OperatorMatrix::new("Q", q), p: OperatorMatrix::new("P", p), x: OperatorMatrix::new("X", x), b })
}

/// H = P²/(2M).
pub fn free_cm_hamiltonian(params: &ModelParams, d: usize) -> Result<OperatorMatrix, FockError> {
    let ops = cm_operators(params, d)?;
    let h = &ops.p.matrix * &ops.p.matrix * C64::new(0.5 / params.big_m, 0.0);
    // clean the roundoff asymmetry
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    Ok(OperatorMatrix::new("H", h))
}

/// Rule of thumb for a coherent amplitude to fit in d levels.
pub fn truncation_adequate(alpha: C64, d: usize) -> bool {
    let a = alpha.norm();
    a * a + 4.0 * a + 6.0 <= d as f64
}

/// Coherent state |α⟩ renormalised on the truncated basis.
pub fn coherent_state(alpha: C64, d: usize) -> Result<StateVector, FockError> {
    if d < 2 {
        return Err(FockError::DimTooSmall { d, min: 2 });
    }
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(FockError::InvalidState("non-finite coherent amplitude".into()));
    }
    if !truncation_adequate(alpha, d) {
        log::warn!("coherent amplitude |alpha| = {} is not well resolved by d = {d}", alpha.norm());
    }
    let mut v = DVector::zeros(d);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for k in 0..d {
        v[k] = c;
        c = c * alpha / ((k + 1) as f64).sqrt();
    }
    Ok(StateVector::new(v).normalized())
}

/// Diagonal Bose–Einstein state with mean occupation `nbar` before truncation.
pub fn thermal_state(nbar: f64, d: usize) -> Result<DensityMatrix, FockError> {
    ParamError::check_nonnegative("nbar", nbar)?;
    if d < 2 {
        return Err(FockError::DimTooSmall { d, min: 2 });
    }
    let r = nbar / (1.0 + nbar);
    let w: Vec<f64> = (0..d).map(|k| r.powi(k as i32)).collect();
    let z: f64 = w.iter().sum();
    let mut m = DMatrix::zeros(d, d);
    for k in 0..d {
        m[(k, k)] = C64::new(w[k] / z, 0.0);
    }
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Balanced superposition of two coherent states centred on α and displaced
/// by ±separation/2 along Q.
pub fn superposition_state(params: &ModelParams, alpha: C64, separation: f64, d: usize) -> Result<StateVector, FockError> {
    params.validate()?;
    ParamError::check_nonnegative("separation", separation)?;
    // ⟨Q⟩ = 2 Re α · √(ℏ/(2mωN))
    let q_per_alpha = 2.0 * (params.hbar() / (2.0 * params.m * params.omega * params.n_particles)).sqrt();
    let delta = C64::new(0.5 * separation / q_per_alpha, 0.0);
    let a = coherent_state(alpha + delta, d)?;
    let b = coherent_state(alpha - delta, d)?;
    Ok(StateVector::new(a.amplitudes + b.amplitudes).normalized())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn interior_max(m: &DMatrix<C64>, target: &DMatrix<C64>) -> f64 {
        let d = m.nrows() - 1;
        max_abs(&(m.view((0, 0), (d, d)) - target.view((0, 0), (d, d))))
    }

    #[test]
    fn ladder_operator() {
        let b = annihilation_matrix(2).unwrap();
        assert_eq!(b.matrix, DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]));
        let b3 = annihilation_matrix(3).unwrap();
        let n = b3.dagger().product(&b3);
        for k in 0..3 {
            assert!((n.matrix[(k, k)] - c(k as f64)).norm() < 1e-15);
        }
        let d = 7;
        let b = annihilation_matrix(d).unwrap();
        let comm = &b.matrix * b.matrix.adjoint() - b.matrix.adjoint() * &b.matrix;
        let mut expected = DMatrix::identity(d, d);
        expected[(d - 1, d - 1)] = c(1.0 - d as f64);
        assert!(max_abs(&(comm - expected)) < 1e-12);
        assert!(annihilation_matrix(1).is_err());
    }

    #[test]
    fn canonical_commutators() {
        let one = ModelParams::engine(1.0, 0.0, 0.0).unwrap();
        let ops = cm_operators(&one, 16).unwrap();
        let qp = &ops.q.matrix * &ops.p.matrix - &ops.p.matrix * &ops.q.matrix;
        assert!(interior_max(&qp, &(DMatrix::identity(16, 16) * C64::i())) < 1e-10);

        let four = ModelParams::engine(4.0, 0.0, 0.0).unwrap();
        let ops = cm_operators(&four, 16).unwrap();
        let xx = &ops.x.matrix * ops.x.matrix.adjoint() - ops.x.matrix.adjoint() * &ops.x.matrix;
        assert!(interior_max(&xx, &(DMatrix::identity(16, 16) * c(4.0))) < 1e-10);
        let qp = &ops.q.matrix * &ops.p.matrix - &ops.p.matrix * &ops.q.matrix;
        assert!(interior_max(&qp, &(DMatrix::identity(16, 16) * C64::i())) < 1e-10);
    }

    #[test]
    fn x_from_q_and_p() {
        for (n, d) in [(1.0, 6), (4.0, 12), (1e3, 20)] {
            let p = ModelParams::new(n, 2.0, 3.0, 0.1, 0.01, 1.0, crate::units::PhysicalConstants::new(0.7, 1.0).unwrap()).unwrap();
            let ops = cm_operators(&p, d).unwrap();
            let (hbar, m, w) = (p.hbar(), p.m, p.omega);
            let rebuilt = (&ops.q.matrix * c(n * m * w) + &ops.p.matrix * C64::i()) * c(1.0 / (2.0 * hbar * m * w).sqrt());
            let xs = &ops.b.matrix * c(n.sqrt());
            assert!(max_abs(&(rebuilt - xs)) <= 1e-12 * max_abs(&ops.x.matrix));
        }
    }

    #[test]
    fn hamiltonian_properties() {
        let p = ModelParams::engine(4.0, 0.0, 0.0).unwrap();
        let h = free_cm_hamiltonian(&p, 16).unwrap();
        assert!(h.is_hermitian());
        assert!((h.matrix[(0, 0)] - c(0.25)).norm() < 1e-14);
        let ops = cm_operators(&p, 16).unwrap();
        let hp = &h.matrix * &ops.p.matrix - &ops.p.matrix * &h.matrix;
        // P² couples k to k ± 2, so the commutator is exact away from the last two levels
        let k = 13;
        assert!(max_abs(&hp.view((0, 0), (k, k)).into_owned()) < 1e-12);
        for op in [&ops.q, &ops.p, &h] {
            assert!(op.is_hermitian(), "{}", op.label);
        }
    }

    #[test]
    fn free_ehrenfest() {
        // d⟨Q⟩/dt = i⟨[H, Q]⟩ = ⟨P⟩/M
        let p = ModelParams::engine(4.0, 0.0, 0.0).unwrap();
        let d = 40;
        let ops = cm_operators(&p, d).unwrap();
        let h = free_cm_hamiltonian(&p, d).unwrap();
        let psi = coherent_state(C64::new(0.8, -1.1), d).unwrap();
        let comm = OperatorMatrix::new("", (&h.matrix * &ops.q.matrix - &ops.q.matrix * &h.matrix) * C64::i());
        let lhs = psi.expect(&comm);
        let rhs = psi.expect(&ops.p) / p.big_m;
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn initial_states() {
        let v = coherent_state(C64::new(0.0, 0.0), 10).unwrap();
        assert_eq!(v, StateVector::basis(10, 0));
        let t = thermal_state(0.0, 10).unwrap();
        assert_eq!(t.matrix, StateVector::basis(10, 0).projector());
        let t = thermal_state(0.5, 30).unwrap();
        assert!((t.trace() - c(1.0)).norm() < 1e-14);
        assert!(DensityMatrix::new(t.matrix.clone()).is_ok());

        let p = ModelParams::engine(4.0, 0.0, 0.0).unwrap();
        let ops = cm_operators(&p, 40).unwrap();
        let cat = superposition_state(&p, C64::new(0.0, 0.0), 2.0, 40).unwrap();
        assert!((cat.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(cat.expect(&ops.q).norm() < 1e-12);
        // each component sits at ±separation/2
        let right = superposition_state(&p, C64::new(0.0, 0.0), 0.0, 40).unwrap();
        assert!(right.expect(&ops.q).norm() < 1e-12);
    }

    #[test]
    fn truncation_convergence() {
        // The |α|² + 4|α| + 6 rule leaves ~1e-7 of Poisson weight near the
        // edge, where Q² and P² see the truncation; the test states also have
        // tail weight beyond d − 3 below 1e-12.
        let p = ModelParams::engine(1.0, 0.0, 0.0).unwrap();
        let moments = |alpha: C64, d: usize| {
            let ops = cm_operators(&p, d).unwrap();
            let psi = coherent_state(alpha, d).unwrap();
            let q2 = ops.q.product(&ops.q);
            let p2 = ops.p.product(&ops.p);
            (psi.expect(&q2).re, psi.expect(&p2).re)
        };
        for alpha in [C64::new(0.0, 0.0), C64::new(0.5, 0.0), C64::new(1.0, 0.5), C64::new(1.5, 0.5), C64::new(0.0, 2.0)] {
            let n = alpha.norm_sqr();
            let mut d = 4;
            loop {
                let tail: f64 = (d - 3..200).map(|k| (-n + k as f64 * n.max(1e-300).ln() - libm::lgamma(k as f64 + 1.0)).exp()).sum();
                if truncation_adequate(alpha, d) && (n == 0.0 || tail < 1e-12) {
                    break;
                }
                d += 1;
            }
            let (a, b) = (moments(alpha, d), moments(alpha, 2 * d));
            assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8, "alpha={alpha} d={d}: {a:?} {b:?}");
        }
    }

    #[test]
    fn density_matrix_gates() {
        let mut m = DMatrix::identity(2, 2) * c(0.5);
        let rho = DensityMatrix::new(m.clone()).unwrap();
        assert!((rho.purity() - 0.5).abs() < 1e-15);
        m[(0, 1)] = c(0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.2), c(0.0), c(0.0), c(-0.2)]);
        assert!(DensityMatrix::new(bad).is_err());
        let a = StateVector::basis(2, 0).to_density();
        let b = StateVector::basis(2, 1).to_density();
        assert!((a.trace_distance(&b) - 1.0).abs() < 1e-14);
    }
}
