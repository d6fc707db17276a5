//! Numerical laboratory for centre-of-mass decoherence induced by a thermal
//! photon bath.
//!
//! The same open-system model is realised three ways and cross-checked
//! against closed forms:
//!
//! * [`lindblad`]: the reduced master equation on a truncated Fock basis, plus
//!   the joint system+bath-mode pre-master equation and partial traces;
//! * [`ito`]: raw (linear, unnormalised) Itô state-vector trajectories whose
//!   ensemble mean reproduces the master equation;
//! * [`grid`]: the position-representation PDE for `ρ(Q, Q′)`.
//!
//! [`oracles`] holds the moment, thermalisation, decoherence-time and entropy
//! formulas; [`spectrum`] the Lorentzian bath spectrum and its temperature
//! integral; [`grwp`] the collapse-model baseline calculators; [`units`] the
//! CGS ↔ dimensionless conversion used to feed the engines.

pub mod fock;
pub mod grid;
pub mod grwp;
pub mod ito;
pub mod lindblad;
pub mod oracles;
pub mod params;
pub mod quadrature;
pub mod spectrum;
pub mod units;

mod sparse;

pub use num_complex::Complex64 as C64;

pub use fock::{DensityMatrix, OperatorMatrix, StateVector};
pub use params::{ModelParams, ParamError};
pub use units::{PhysicalConstants, UnitKind, UnitSystem};
