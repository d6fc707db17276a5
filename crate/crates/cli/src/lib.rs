//! Scenario files, engine dispatch and result bundles for `declab`.

pub mod builtin;
pub mod bundle;
pub mod crossval;
pub mod engines;
pub mod observables;
pub mod output;
pub mod scenario;
pub mod sweep;
