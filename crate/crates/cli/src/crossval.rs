//! Engine-against-engine consistency reports.

use serde::Serialize;
use thiserror::Error;

use crate::engines::{run_point, EngineError, PointOutput};
use crate::scenario::{comparable, Engine, Scenario};

pub const TRACE_DISTANCE_TOL: f64 = 0.05;
pub const MOMENT_TOL: f64 = 1e-3;
pub const ZETA_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub pair: String,
    pub metric: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossReport {
    pub checks: Vec<CrossCheck>,
}

impl CrossReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Error)]
pub enum CrossError {
    #[error("incompatible scenarios: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn check(a: Engine, b: Engine, metric: &str, value: f64, tolerance: f64) -> CrossCheck {
    CrossCheck { pair: format!("{a}~{b}"), metric: metric.to_string(), value, tolerance, pass: value <= tolerance }
}

/// Worst relative error of the five moments, each measured against its own
/// natural scale so a moment passing through zero does not blow up.
fn moment_error(a: &PointOutput, b: &PointOutput) -> Result<f64, String> {
    let get = |o: &PointOutput, n: &str| o.series(n).map(|v| v.to_vec()).ok_or(format!("missing series {n}"));
    let (q, p, q2, qp, p2) = (get(b, "Q")?, get(b, "P")?, get(b, "Q2")?, get(b, "QP")?, get(b, "P2")?);
    let (qa, pa, q2a, qpa, p2a) = (get(a, "Q")?, get(a, "P")?, get(a, "Q2")?, get(a, "QP")?, get(a, "P2")?);
    if q.len() != qa.len() {
        return Err("output grids differ".into());
    }
    let mut worst: f64 = 0.0;
    for k in 0..q.len() {
        let errs = [
            (qa[k] - q[k]).abs() / q[k].abs().max(q2[k].sqrt()),
            (pa[k] - p[k]).abs() / p[k].abs().max(p2[k].sqrt()),
            ((q2a[k] - q2[k]) / q2[k]).abs(),
            (qpa[k] - qp[k]).abs() / qp[k].abs().max((q2[k] * p2[k]).sqrt()),
            ((p2a[k] - p2[k]) / p2[k]).abs(),
        ];
        worst = errs.iter().fold(worst, |w, e| w.max(*e));
    }
    Ok(worst)
}

/// Compare two finished runs of the same physics.
pub fn compare(ea: Engine, a: &PointOutput, eb: Engine, b: &PointOutput) -> Result<Vec<CrossCheck>, CrossError> {
    let inc = CrossError::Incompatible;
    let (x, y, ox, oy) = if ea <= eb { (ea, eb, a, b) } else { (eb, ea, b, a) };
    Ok(match (x, y) {
        (Engine::Lindblad, Engine::Ito) => {
            if ox.states.len() != oy.states.len() || ox.states.is_empty() {
                return Err(inc("state series differ in length".into()));
            }
            let mut worst: f64 = 0.0;
            for (r, s) in ox.states.iter().zip(&oy.states) {
                worst = worst.max(r.trace_distance(s));
            }
            let last = ox.states.last().unwrap().trace_distance(oy.states.last().unwrap());
            vec![
                check(x, y, "max_trace_distance", worst, TRACE_DISTANCE_TOL),
                check(x, y, "final_trace_distance", last, TRACE_DISTANCE_TOL),
            ]
        }
        (Engine::Lindblad, Engine::Oracles) => {
            vec![check(x, y, "max_rel_moment_error", moment_error(ox, oy).map_err(inc)?, MOMENT_TOL)]
        }
        (Engine::Grid, Engine::Oracles) => {
            let fit = ox.scalar("zeta_fit").ok_or_else(|| inc("grid run has no decay fit (needs a cat state)".into()))?;
            let zeta = oy.scalar("zeta").ok_or_else(|| inc("oracle run has no zeta (needs delta_q)".into()))?;
            vec![check(x, y, "zeta_rel_error", ((fit - zeta) / zeta).abs(), ZETA_TOL)]
        }
        _ => return Err(inc(format!("no comparison defined between {ea} and {eb}"))),
    })
}

fn same_physics(a: &Scenario, b: &Scenario) -> Result<(), String> {
    if a.units != b.units || a.params != b.params {
        return Err("parameters differ".into());
    }
    if !a.sweep.is_empty() || !b.sweep.is_empty() {
        return Err("cross-validation needs single-point scenarios".into());
    }
    let oracle_side = a.engine == Engine::Oracles || b.engine == Engine::Oracles;
    if a.initial_state != b.initial_state && !(oracle_side && (a.initial_state.is_none() || b.initial_state.is_none())) {
        return Err("initial states differ".into());
    }
    let timed = |s: &Scenario| s.initial_state.is_some() && s.run.t_max.is_some();
    if timed(a) && timed(b) && a.run.times() != b.run.times() {
        return Err("output times differ".into());
    }
    Ok(())
}

/// Run both scenarios and compare them.
pub fn cross_validate(a: &Scenario, b: &Scenario, seed: u64) -> Result<CrossReport, CrossError> {
    if !comparable(a.engine, b.engine) {
        return Err(CrossError::Incompatible(format!("no comparison defined between {} and {}", a.engine, b.engine)));
    }
    same_physics(a, b).map_err(CrossError::Incompatible)?;
    let point = Vec::new();
    let (ra, rb) = rayon::join(|| run_point(a, &point, seed), || run_point(b, &point, seed));
    Ok(CrossReport { checks: compare(a.engine, &ra?, b.engine, &rb?)? })
}
