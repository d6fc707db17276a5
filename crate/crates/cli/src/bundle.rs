//! Scenario → tables + manifest, and back again.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use declab_core::ito::trajectory_seed;

use crate::builtin;
use crate::crossval::{compare, CrossCheck, CrossError};
use crate::engines::{run_point, EngineError, PointOutput};
use crate::observables::{Kind, ONE};
use crate::output::{Column, Table};
use crate::scenario::{parse_str, Engine, Issue, Scenario, ScenarioError, UnitChoice};

pub const MANIFEST_FORMAT: &str = "declab-result/1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cross-validation: {0}")]
    Cross(#[from] CrossError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `run.seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub manifest: Value,
    pub tables: Vec<Table>,
    pub cross: Vec<CrossCheck>,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// `manifest.json` plus one CSV per table.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for t in &self.tables {
            let f = std::fs::File::create(dir.join(format!("{}.csv", t.name)))?;
            t.write(std::io::BufWriter::new(f)).map_err(std::io::Error::other)?;
        }
        let text = serde_json::to_string_pretty(&self.manifest).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")
    }
}

/// A scenario ready to run: parsed, with its source text and any seed
/// carried over from a manifest.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub source: String,
    pub seed: Option<u64>,
}

/// Accepts a scenario file, `builtin:NAME`, or a `manifest.json` from an
/// earlier run (which replays that run exactly).
pub fn load(spec: &str) -> Result<Loaded, ScenarioError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let b = builtin::get(name).ok_or_else(|| invalid(format!("no built-in scenario \"{name}\"; see list-builtin")))?;
        return Ok(Loaded { scenario: parse_str(b.source)?, source: b.source.to_string(), seed: None });
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: spec.to_string(), source: e })?;
    if path.extension().is_some_and(|e| e == "json") {
        return from_manifest(&text);
    }
    Ok(Loaded { scenario: parse_str(&text)?, source: text, seed: None })
}

fn invalid(message: String) -> ScenarioError {
    ScenarioError::Invalid(vec![Issue { path: String::new(), message }])
}

/// The scenario and seed recorded in a manifest.
pub fn from_manifest(text: &str) -> Result<Loaded, ScenarioError> {
    let v: Value = serde_json::from_str(text).map_err(|e| invalid(format!("manifest is not valid JSON: {e}")))?;
    if v.get("format").and_then(Value::as_str) != Some(MANIFEST_FORMAT) {
        return Err(invalid(format!("not a {MANIFEST_FORMAT} manifest")));
    }
    let source = v.get("scenario_source").and_then(Value::as_str).ok_or_else(|| invalid("manifest lacks scenario_source".into()))?;
    let seed = match v.get("seed") {
        None => None,
        Some(s) => Some(s.as_u64().ok_or_else(|| invalid("manifest seed is not a u64".into()))?),
    };
    Ok(Loaded { scenario: parse_str(source)?, source: source.to_string(), seed })
}

fn axis_unit(name: &str, units: UnitChoice) -> &'static str {
    if units == UnitChoice::Engine {
        return "1";
    }
    match name {
        "m" => "g",
        "omega" | "Lambda" => "1/s",
        "tau_c" => "s",
        "T" => "K",
        "delta_q" => "cm",
        _ => "1",
    }
}

fn unit_label(s: &Scenario, name: &str) -> String {
    let obs = s.observable(name).expect("validated output");
    if obs.dim == ONE || s.units == UnitChoice::Engine {
        "1".to_string()
    } else {
        obs.dim.cgs_label()
    }
}

/// Seed of sweep point `index`; a single-point run uses the master seed.
pub fn point_seed(master: u64, index: usize, points: usize) -> u64 {
    if points == 1 {
        master
    } else {
        trajectory_seed(master, index as u64)
    }
}

fn build_tables(s: &Scenario, plan: &[Vec<(String, f64)>], results: &[PointOutput]) -> Vec<Table> {
    let sweep_cols: Vec<Column> = plan[0].iter().map(|(a, _)| Column::new(a.clone(), axis_unit(a, s.units))).collect();
    let time_unit = if s.units == UnitChoice::Cgs { "s" } else { "1" };
    let pick =
        |kind: Kind| -> Vec<&String> { s.outputs.iter().filter(|o| s.observable(o).map(|x| x.kind == kind).unwrap_or(false)).collect() };
    let series_names = pick(Kind::Series);
    let scalar_names = pick(Kind::Scalar);
    let mut tables = Vec::new();

    if !series_names.is_empty() {
        let mut cols = sweep_cols.clone();
        cols.push(Column::new("t", time_unit));
        cols.extend(series_names.iter().map(|n| Column::new(n.as_str(), unit_label(s, n))));
        let mut t = Table::new("series", cols);
        for (point, out) in plan.iter().zip(results) {
            for (k, time) in out.times.iter().enumerate() {
                let mut row: Vec<f64> = point.iter().map(|(_, v)| *v).collect();
                row.push(*time);
                for n in &series_names {
                    row.push(out.series(n).map(|v| v[k]).unwrap_or(f64::NAN));
                }
                t.push(row);
            }
        }
        tables.push(t);
    }
    if !scalar_names.is_empty() {
        let mut cols = sweep_cols;
        cols.extend(scalar_names.iter().map(|n| Column::new(n.as_str(), unit_label(s, n))));
        let mut t = Table::new("summary", cols);
        for (point, out) in plan.iter().zip(results) {
            let mut row: Vec<f64> = point.iter().map(|(_, v)| *v).collect();
            for n in &scalar_names {
                row.push(out.scalar(n).unwrap_or(f64::NAN));
            }
            t.push(row);
        }
        tables.push(t);
    }
    if plan.len() == 1 && !results[0].timescales.is_empty() {
        let mut t = Table::labelled("timescales", "quantity", vec![Column::new("time", time_unit)]);
        for (label, v) in &results[0].timescales {
            t.push_labelled(label.clone(), vec![*v]);
        }
        tables.push(t);
    }
    tables
}

#[derive(Serialize)]
struct TableEntry {
    file: String,
    columns: Vec<String>,
    rows: usize,
}

/// Run every sweep point (concurrently) and assemble the bundle.
pub fn run_scenario(s: &Scenario, source: &str, opts: &RunOptions) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(s.run.seed);
    let plan = s.plan();
    let n = plan.len();
    let results: Vec<Result<PointOutput, EngineError>> =
        plan.par_iter().enumerate().map(|(i, p)| run_point(s, p, point_seed(seed, i, n))).collect();
    let results: Vec<PointOutput> = results.into_iter().collect::<Result<_, _>>()?;
    let mut tables = build_tables(s, &plan, &results);
    let mut warnings: Vec<String> = results.iter().flat_map(|r| r.warnings.iter().cloned()).collect();

    let mut cross = Vec::new();
    if !s.cross.is_empty() {
        let partners: Vec<(Engine, Result<PointOutput, EngineError>)> =
            s.cross.par_iter().map(|e| (*e, run_point(&s.with_engine(*e), &plan[0], seed))).collect();
        for (e, out) in partners {
            let out = out?;
            warnings.extend(out.warnings.iter().cloned());
            cross.extend(compare(s.engine, &results[0], e, &out)?);
        }
        let mut t = Table::labelled(
            "cross_validation",
            "check",
            vec![Column::new("value", "1"), Column::new("tolerance", "1"), Column::new("pass", "1")],
        );
        for c in &cross {
            t.push_labelled(format!("{}:{}", c.pair, c.metric), vec![c.value, c.tolerance, if c.pass { 1.0 } else { 0.0 }]);
            if !c.pass {
                warnings.push(format!("cross-validation {}:{} = {:e} exceeds {:e}", c.pair, c.metric, c.value, c.tolerance));
            }
        }
        tables.push(t);
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let entries: Vec<TableEntry> = tables
        .iter()
        .map(|t| TableEntry {
            file: format!("{}.csv", t.name),
            columns: t.label.iter().cloned().chain(t.columns.iter().map(Column::header)).collect(),
            rows: t.rows.len(),
        })
        .collect();
    let point_seeds: Vec<u64> = if s.engine == Engine::Ito || s.cross.contains(&Engine::Ito) {
        (0..n).map(|i| point_seed(seed, i, n)).collect()
    } else {
        Vec::new()
    };
    let manifest = json!({
        "format": MANIFEST_FORMAT,
        "code_version": env!("CARGO_PKG_VERSION"),
        "scenario_name": s.name,
        "engine": s.engine,
        "seed": seed,
        "point_seeds": point_seeds,
        "threads": rayon::current_num_threads(),
        "sweep_points": n,
        "defaults": s.defaults,
        "scenario": s,
        "scenario_source": source,
        "tables": entries,
        "cross_validation": cross,
        "warnings": warnings,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    Ok(ResultBundle { manifest, tables, cross })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCAN: &str = r#"
name = "scan"
engine = "oracles"
outputs = ["tau_D", "nbar"]
[units]
system = "cgs"
[params]
N = 1e23
m = 1e-23
omega = 1e3
Lambda = 1e-38
tau_c = 1e-4
T = 3
[run]
delta_q = 1.0
[sweep]
T = [3, 30, 3000, 3e9]
"#;

    #[test]
    fn sweep_rows_follow_the_plan() {
        let s = parse_str(SCAN).unwrap();
        let b = run_scenario(&s, SCAN, &RunOptions::default()).unwrap();
        let t = b.table("summary").unwrap();
        assert_eq!(t.columns.iter().map(Column::header).collect::<Vec<_>>(), ["T[K]", "tau_D[s]", "nbar[1]"]);
        assert_eq!(t.column("T").unwrap(), vec![3.0, 30.0, 3000.0, 3e9]);
        let tau = t.column("tau_D").unwrap();
        assert!(tau.windows(2).all(|w| w[1] < w[0]));
        assert!(b.table("series").is_none());
        assert_eq!(b.manifest["sweep_points"], 4);
        assert_eq!(b.manifest["scenario"]["params"]["Lambda"], 1e-38);
    }

    #[test]
    fn axis_units() {
        assert_eq!(axis_unit("T", UnitChoice::Cgs), "K");
        assert_eq!(axis_unit("T", UnitChoice::Engine), "1");
        assert_eq!(axis_unit("N", UnitChoice::Cgs), "1");
        assert_eq!(point_seed(7, 0, 1), 7);
        assert_ne!(point_seed(7, 0, 2), point_seed(7, 1, 2));
    }
}
