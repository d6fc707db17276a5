//! Scenario files: TOML, strict.
//!
//! Every problem found is reported at once, each tagged with its key path.
//! Physics parameters never get defaults; numerical knobs do, and each
//! default applied is recorded so it ends up in the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;
use toml::{Table, Value};

use declab_core::fock::truncation_adequate;
use declab_core::grid::GridSpec;
use declab_core::grwp::CslParams;
use declab_core::{ModelParams, ParamError, PhysicalConstants, C64};

use crate::observables::{self, Kind, Observable};
use crate::sweep::{self, SweepAxis, SweepPoint};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", join_issues(.0))]
    Invalid(Vec<Issue>),
}

impl ScenarioError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ScenarioError::Invalid(v) => v,
            ScenarioError::Io { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Lindblad,
    Ito,
    Grid,
    Oracles,
    Grwp,
    Integral,
}

impl Engine {
    pub const ALL: [Engine; 6] = [Engine::Lindblad, Engine::Ito, Engine::Grid, Engine::Oracles, Engine::Grwp, Engine::Integral];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::Lindblad => "lindblad",
            Engine::Ito => "ito",
            Engine::Grid => "grid",
            Engine::Oracles => "oracles",
            Engine::Grwp => "grwp",
            Engine::Integral => "integral",
        }
    }

    pub fn parse(s: &str) -> Option<Engine> {
        Engine::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn observables(&self) -> &'static [Observable] {
        match self {
            Engine::Lindblad => observables::LINDBLAD,
            Engine::Ito => observables::ITO,
            Engine::Grid => observables::GRID,
            Engine::Oracles => observables::ORACLES,
            Engine::Grwp => observables::GRWP,
            Engine::Integral => observables::INTEGRAL,
        }
    }

    /// Engines that integrate a state forward in time.
    pub fn is_dynamical(&self) -> bool {
        matches!(self, Engine::Lindblad | Engine::Ito | Engine::Grid)
    }

    fn accepts(&self, state: &InitialState) -> bool {
        use InitialState as S;
        match self {
            Engine::Lindblad => matches!(state, S::Coherent { .. } | S::Thermal { .. } | S::Fock { .. } | S::Cat { .. }),
            Engine::Ito => matches!(state, S::Coherent { .. } | S::Fock { .. } | S::Cat { .. }),
            Engine::Grid => matches!(state, S::Coherent { .. } | S::Gaussian { .. } | S::Cat { .. }),
            Engine::Oracles => matches!(state, S::Coherent { .. } | S::Thermal { .. } | S::Fock { .. } | S::Gaussian { .. }),
            Engine::Grwp | Engine::Integral => false,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pairs `cross_validate` knows how to compare.
pub fn comparable(a: Engine, b: Engine) -> bool {
    let (x, y) = if a <= b { (a, b) } else { (b, a) };
    matches!((x, y), (Engine::Lindblad, Engine::Ito) | (Engine::Lindblad, Engine::Oracles) | (Engine::Grid, Engine::Oracles))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitChoice {
    /// Seconds, centimetres, grams, kelvin.
    Cgs,
    /// ℏ = m = ω = k_B = 1.
    Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamBlock {
    #[serde(rename = "N")]
    pub n: f64,
    pub m: f64,
    pub omega: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub tau_c: f64,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    pub dims: u8,
}

impl ParamBlock {
    pub fn model(&self, units: UnitChoice) -> Result<ModelParams, ParamError> {
        let consts = match units {
            UnitChoice::Cgs => PhysicalConstants::CGS,
            UnitChoice::Engine => PhysicalConstants::NATURAL,
        };
        let temperature = match (self.temperature, self.nbar) {
            (Some(t), _) => t,
            (None, Some(n)) => {
                ParamError::check_nonnegative("nbar", n)?;
                if n == 0.0 {
                    0.0
                } else {
                    self.omega / (1.0 / n).ln_1p()
                }
            }
            (None, None) => return Err(ParamError::Other("no temperature given".into())),
        };
        ModelParams::new(self.n, self.m, self.omega, self.lambda, self.tau_c, temperature, consts)?.with_dims(self.dims)
    }

    /// Copy with one sweep axis substituted; `delta_q` is not a model parameter.
    pub fn with_axis(mut self, name: &str, value: f64) -> Self {
        match name {
            "N" => self.n = value,
            "m" => self.m = value,
            "omega" => self.omega = value,
            "Lambda" => self.lambda = value,
            "tau_c" => self.tau_c = value,
            "T" => self.temperature = Some(value),
            "nbar" => self.nbar = Some(value),
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    Coherent {
        alpha: [f64; 2],
    },
    Thermal {
        nbar: f64,
    },
    Fock {
        n: usize,
    },
    /// Equal superposition of two packets displaced by ±separation/2 along Q.
    Cat {
        alpha: [f64; 2],
        separation: f64,
        sigma: Option<f64>,
    },
    /// Position-space packet; lengths and momenta in scenario units.
    Gaussian {
        center: f64,
        sigma: f64,
        momentum: f64,
    },
}

impl InitialState {
    pub fn alpha(&self) -> Option<C64> {
        match self {
            InitialState::Coherent { alpha } | InitialState::Cat { alpha, .. } => Some(C64::new(alpha[0], alpha[1])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftChoice {
    TraceConserving,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunBlock {
    pub t_max: Option<f64>,
    pub n_outputs: usize,
    /// None: the engine's stability bound.
    pub dt: Option<f64>,
    pub dim: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub half_width: Option<f64>,
    pub points: Option<usize>,
    pub delta_q: Option<f64>,
    pub drift: DriftChoice,
    pub residue_terms: usize,
    pub quadrature_tol: f64,
}

impl RunBlock {
    pub fn times(&self) -> Vec<f64> {
        let t_max = self.t_max.unwrap_or(0.0);
        let n = self.n_outputs.max(2);
        (0..n).map(|k| if k == n - 1 { t_max } else { t_max * k as f64 / (n - 1) as f64 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Relaxation {
    #[serde(rename = "tau_R")]
    pub tau_r: f64,
    #[serde(rename = "K_s")]
    pub k_s: f64,
    #[serde(rename = "K_eq")]
    pub k_eq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CslBlock {
    pub alpha: f64,
    pub zeta: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "S_i")]
    pub s_i: f64,
    pub n: f64,
}

impl CslBlock {
    pub fn params(&self) -> Result<CslParams, ParamError> {
        CslParams::new(self.alpha, self.zeta, self.d0, self.s_i, self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefaultApplied {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub engine: Engine,
    pub units: UnitChoice,
    pub params: ParamBlock,
    pub initial_state: Option<InitialState>,
    pub run: RunBlock,
    pub sweep: Vec<SweepAxis>,
    pub outputs: Vec<String>,
    pub relaxation: Option<Relaxation>,
    pub csl: Option<CslBlock>,
    pub cross: Vec<Engine>,
    pub defaults: Vec<DefaultApplied>,
}

impl Scenario {
    pub fn plan(&self) -> Vec<SweepPoint> {
        let axes: BTreeMap<String, Vec<f64>> = self.sweep.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
        sweep::plan(&axes).expect("validated at parse time")
    }

    pub fn observable(&self, name: &str) -> Option<Observable> {
        observables::find(self.engine.observables(), name)
    }

    pub fn has_series(&self) -> bool {
        self.outputs.iter().any(|o| self.observable(o).map(|o| o.kind == Kind::Series).unwrap_or(false))
    }

    /// Model parameters and Δq at one sweep point.
    pub fn at_point(&self, point: &SweepPoint) -> Result<(ModelParams, Option<f64>), ParamError> {
        let mut block = self.params;
        let mut delta_q = self.run.delta_q;
        for (name, v) in point {
            if name == "delta_q" {
                delta_q = Some(*v);
            } else {
                block = block.with_axis(name, *v);
            }
        }
        Ok((block.model(self.units)?, delta_q))
    }

    /// Copy that runs `engine` on the same physics, for cross-validation.
    pub fn with_engine(&self, engine: Engine) -> Scenario {
        let mut s = self.clone();
        s.engine = engine;
        s.cross.clear();
        if engine == Engine::Oracles {
            // no closed form for the cat itself; compare its coherence decay
            if let Some(InitialState::Cat { separation, .. }) = s.initial_state {
                s.initial_state = None;
                s.run.delta_q = Some(separation);
            }
        }
        s.outputs = default_outputs(&s);
        s
    }
}

pub fn parse_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let src = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
    parse_str(&src)
}

// size limits keep a run at desk scale
pub const MAX_OUTPUTS: usize = 100_000;
pub const MAX_DIM: usize = 1_000;
pub const MAX_TRAJECTORIES: usize = 1_000_000;
pub const MAX_RESIDUE_TERMS: usize = 10_000_000;
pub const MAX_GRID_POINTS: usize = 2_048;

const TOP_KEYS: &[&str] =
    &["name", "description", "engine", "outputs", "units", "params", "initial_state", "run", "sweep", "relaxation", "csl", "cross"];
const UNIT_KEYS: &[&str] = &["system"];
const PARAM_KEYS: &[&str] = &["N", "m", "omega", "Lambda", "tau_c", "T", "nbar", "dims"];
const RUN_KEYS: &[&str] = &[
    "t_max",
    "n_outputs",
    "dt",
    "dim",
    "trajectories",
    "seed",
    "half_width",
    "points",
    "delta_q",
    "drift",
    "residue_terms",
    "quadrature_tol",
];
const RELAX_KEYS: &[&str] = &["tau_R", "K_s", "K_eq"];
const CSL_KEYS: &[&str] = &["preset", "alpha", "zeta", "D0", "S_i", "n"];
const CROSS_KEYS: &[&str] = &["against"];
const SWEEP_AXES: &[&str] = &["N", "m", "omega", "Lambda", "tau_c", "T", "nbar", "delta_q"];
const STATE_KINDS: &[&str] = &["coherent", "thermal", "fock", "cat", "gaussian"];

/// Closest allowed key, if any is plausibly what was meant.
pub fn suggest(key: &str, allowed: &[&str]) -> Option<String> {
    let k = key.to_lowercase();
    allowed
        .iter()
        .map(|a| (strsim::normalized_damerau_levenshtein(&k, &a.to_lowercase()), *a))
        .filter(|(score, _)| *score >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, a)| a.to_string())
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

struct Reader {
    issues: Vec<Issue>,
    defaults: Vec<DefaultApplied>,
}

impl Reader {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue { path: path.into(), message: message.into() });
    }

    fn default(&mut self, key: &str, value: impl fmt::Display) {
        self.defaults.push(DefaultApplied { key: key.to_string(), value: value.to_string() });
    }

    fn check_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                let msg = match suggest(key, allowed) {
                    Some(s) => format!("unknown key; did you mean \"{s}\"?"),
                    None => format!("unknown key; expected one of {}", allowed.join(", ")),
                };
                self.issue(join(path, key), msg);
            }
        }
    }

    fn table<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(x)) => Some(x),
            Some(_) => {
                self.issue(join(path, key), "expected a table");
                None
            }
        }
    }

    fn num(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = match t.get(key)? {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => {
                self.issue(join(path, key), "expected a number");
                return None;
            }
        };
        if !v.is_finite() {
            self.issue(join(path, key), "must be finite");
            return None;
        }
        Some(v)
    }

    fn required_num(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.issue(join(path, key), "required");
            return None;
        }
        self.num(t, path, key)
    }

    fn uint(&mut self, t: &Table, path: &str, key: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::String(s) => match s.parse::<u64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.issue(join(path, key), "expected a non-negative integer");
                    None
                }
            },
            _ => {
                self.issue(join(path, key), "expected a non-negative integer");
                None
            }
        }
    }

    fn string<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            _ => {
                self.issue(join(path, key), "expected a string");
                None
            }
        }
    }

    fn positive(&mut self, path: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x <= 0.0 => {
                self.issue(path, format!("must be > 0, got {x}"));
                None
            }
            other => other,
        }
    }

    fn alpha(&mut self, t: &Table, path: &str) -> Option<[f64; 2]> {
        let p = join(path, "alpha");
        match t.get("alpha") {
            None => {
                self.issue(p, "required");
                None
            }
            Some(Value::Float(x)) if x.is_finite() => Some([*x, 0.0]),
            Some(Value::Integer(i)) => Some([*i as f64, 0.0]),
            Some(Value::Array(a)) if a.len() == 2 => {
                let f = |v: &Value| match v {
                    Value::Float(x) if x.is_finite() => Some(*x),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                };
                match (f(&a[0]), f(&a[1])) {
                    (Some(re), Some(im)) => Some([re, im]),
                    _ => {
                        self.issue(p, "expected [re, im] with finite numbers");
                        None
                    }
                }
            }
            Some(_) => {
                self.issue(p, "expected a number or [re, im]");
                None
            }
        }
    }
}

fn parse_units(r: &mut Reader, root: &Table) -> Option<UnitChoice> {
    let Some(t) = r.table(root, "", "units") else {
        if !root.contains_key("units") {
            r.issue("units", "required: add a [units] table with system = \"cgs\" or \"engine\"");
        }
        return None;
    };
    r.check_keys(t, "units", UNIT_KEYS);
    match r.string(t, "units", "system") {
        Some("cgs") => Some(UnitChoice::Cgs),
        Some("engine") => Some(UnitChoice::Engine),
        Some(other) => {
            r.issue("units.system", format!("unknown unit system \"{other}\"; expected \"cgs\" or \"engine\""));
            None
        }
        None => {
            if !t.contains_key("system") {
                r.issue("units.system", "required");
            }
            None
        }
    }
}

fn parse_params(r: &mut Reader, root: &Table, units: Option<UnitChoice>, engine: Option<Engine>) -> Option<ParamBlock> {
    let Some(t) = r.table(root, "", "params") else {
        if !root.contains_key("params") {
            r.issue("params", "required");
        }
        return None;
    };
    r.check_keys(t, "params", PARAM_KEYS);
    let n = r.required_num(t, "params", "N");
    let lambda = r.required_num(t, "params", "Lambda");
    let (m, omega) = match units {
        Some(UnitChoice::Cgs) => (r.required_num(t, "params", "m"), r.required_num(t, "params", "omega")),
        _ => {
            for key in ["m", "omega"] {
                if let Some(v) = r.num(t, "params", key) {
                    if v != 1.0 {
                        r.issue(join("params", key), format!("is 1 by definition in engine units, got {v}"));
                    }
                }
            }
            (Some(1.0), Some(1.0))
        }
    };
    let temperature = r.num(t, "params", "T");
    let nbar = r.num(t, "params", "nbar");
    match (units, temperature.is_some(), nbar.is_some(), t.contains_key("T"), t.contains_key("nbar")) {
        (Some(UnitChoice::Cgs), _, _, _, true) => r.issue("params.nbar", "only available with units.system = \"engine\"; give T in kelvin"),
        (_, _, _, true, true) => r.issue("params", "give either T or nbar, not both"),
        (_, _, _, false, false) => r.issue("params.T", "required (or nbar in engine units)"),
        _ => {}
    }
    let tau_c = match r.num(t, "params", "tau_c") {
        Some(v) => Some(v),
        None if t.contains_key("tau_c") => None,
        None => {
            if engine == Some(Engine::Integral) {
                r.issue("params.tau_c", "required by the integral engine");
                None
            } else {
                let v = 0.05 / omega.unwrap_or(1.0);
                r.default("params.tau_c", format!("{v} (0.05/omega; unused by this engine)"));
                Some(v)
            }
        }
    };
    let dims = match r.uint(t, "params", "dims") {
        Some(d @ (1 | 3)) => Some(d as u8),
        Some(d) => {
            r.issue("params.dims", format!("must be 1 or 3, got {d}"));
            None
        }
        None if t.contains_key("dims") => None,
        None => {
            r.default("params.dims", 1);
            Some(1)
        }
    };
    Some(ParamBlock { n: n?, m: m?, omega: omega?, lambda: lambda?, tau_c: tau_c?, temperature, nbar, dims: dims? })
}

fn parse_initial_state(r: &mut Reader, root: &Table) -> Option<Option<InitialState>> {
    let Some(t) = r.table(root, "", "initial_state") else {
        return if root.contains_key("initial_state") { None } else { Some(None) };
    };
    let p = "initial_state";
    let kind = match r.string(t, p, "kind") {
        Some(k) if STATE_KINDS.contains(&k) => k,
        Some(k) => {
            let hint = suggest(k, STATE_KINDS).map(|s| format!("; did you mean \"{s}\"?")).unwrap_or_default();
            r.issue("initial_state.kind", format!("unknown state kind \"{k}\"{hint}"));
            return None;
        }
        None => {
            if !t.contains_key("kind") {
                r.issue("initial_state.kind", format!("required; one of {}", STATE_KINDS.join(", ")));
            }
            return None;
        }
    };
    let state = match kind {
        "coherent" => {
            r.check_keys(t, p, &["kind", "alpha"]);
            InitialState::Coherent { alpha: r.alpha(t, p)? }
        }
        "thermal" => {
            r.check_keys(t, p, &["kind", "nbar"]);
            let nbar = r.required_num(t, p, "nbar")?;
            if nbar < 0.0 {
                r.issue("initial_state.nbar", "must be >= 0");
                return None;
            }
            InitialState::Thermal { nbar }
        }
        "fock" => {
            r.check_keys(t, p, &["kind", "n"]);
            if !t.contains_key("n") {
                r.issue("initial_state.n", "required");
            }
            InitialState::Fock { n: r.uint(t, p, "n")? as usize }
        }
        "cat" => {
            r.check_keys(t, p, &["kind", "alpha", "separation", "sigma"]);
            let alpha = r.alpha(t, p);
            let separation = r.required_num(t, p, "separation");
            let sigma = r.num(t, p, "sigma");
            let sigma = r.positive("initial_state.sigma", sigma);
            if let Some(s) = separation {
                if s <= 0.0 {
                    r.issue("initial_state.separation", "must be > 0");
                    return None;
                }
            }
            InitialState::Cat { alpha: alpha?, separation: separation?, sigma }
        }
        _ => {
            r.check_keys(t, p, &["kind", "center", "sigma", "momentum"]);
            let center = r.required_num(t, p, "center");
            let sigma = r.required_num(t, p, "sigma");
            let sigma = r.positive("initial_state.sigma", sigma);
            let momentum = r.required_num(t, p, "momentum");
            InitialState::Gaussian { center: center?, sigma: sigma?, momentum: momentum? }
        }
    };
    Some(Some(state))
}

fn parse_run(r: &mut Reader, root: &Table, engines: &[Engine]) -> RunBlock {
    let empty = Table::new();
    let t = r.table(root, "", "run").unwrap_or(&empty);
    r.check_keys(t, "run", RUN_KEYS);
    let uses = |e: &[Engine]| engines.iter().any(|x| e.contains(x));
    let dynamical = uses(&[Engine::Lindblad, Engine::Ito, Engine::Grid]);
    let fock = uses(&[Engine::Lindblad, Engine::Ito]);
    let relevant: &[(&str, bool)] = &[
        ("t_max", dynamical || uses(&[Engine::Oracles])),
        ("n_outputs", dynamical || uses(&[Engine::Oracles])),
        ("dt", dynamical),
        ("dim", fock || uses(&[Engine::Oracles])),
        ("trajectories", uses(&[Engine::Ito])),
        ("seed", uses(&[Engine::Ito])),
        ("half_width", uses(&[Engine::Grid])),
        ("points", uses(&[Engine::Grid])),
        ("delta_q", uses(&[Engine::Oracles])),
        ("drift", uses(&[Engine::Grid])),
        ("residue_terms", uses(&[Engine::Integral])),
        ("quadrature_tol", uses(&[Engine::Integral])),
    ];
    for (key, used) in relevant {
        if !used && t.contains_key(*key) {
            let names: Vec<_> = engines.iter().map(|e| e.name()).collect();
            r.issue(join("run", key), format!("not used by the {} engine", names.join("/")));
        }
    }
    let used = |k: &str| relevant.iter().any(|(key, u)| *key == k && *u);

    let t_max = r.num(t, "run", "t_max");
    let t_max = r.positive("run.t_max", t_max);
    if dynamical && !t.contains_key("t_max") {
        r.issue("run.t_max", "required");
    }
    let count = |r: &mut Reader, key: &str, default: usize, min: usize, max: usize| -> usize {
        match r.uint(t, "run", key) {
            Some(v) if (v as usize) < min => {
                r.issue(join("run", key), format!("must be >= {min}, got {v}"));
                default
            }
            Some(v) if v as usize > max => {
                r.issue(join("run", key), format!("must be <= {max}, got {v}"));
                default
            }
            Some(v) => v as usize,
            None => {
                if !t.contains_key(key) && used(key) {
                    r.default(&join("run", key), default);
                }
                default
            }
        }
    };
    let n_outputs = count(r, "n_outputs", 21, 2, MAX_OUTPUTS);
    let dim = count(r, "dim", 40, 2, MAX_DIM);
    let trajectories = count(r, "trajectories", 2000, 100, MAX_TRAJECTORIES);
    let residue_terms = count(r, "residue_terms", 2000, 1, MAX_RESIDUE_TERMS);
    let points = match r.uint(t, "run", "points") {
        Some(v) if v < 64 => {
            r.issue("run.points", format!("grid needs at least 64 points per axis, got {v}"));
            None
        }
        Some(v) if v as usize > MAX_GRID_POINTS => {
            r.issue("run.points", format!("must be <= {MAX_GRID_POINTS}, got {v}"));
            None
        }
        other => other.map(|v| v as usize),
    };
    if uses(&[Engine::Grid]) && !t.contains_key("points") {
        r.issue("run.points", "required by the grid engine");
    }
    let half_width = r.num(t, "run", "half_width");
    let half_width = r.positive("run.half_width", half_width);
    if uses(&[Engine::Grid]) && !t.contains_key("half_width") {
        r.issue("run.half_width", "required by the grid engine");
    }
    let seed = match r.uint(t, "run", "seed") {
        Some(s) => s,
        None => {
            if !t.contains_key("seed") && used("seed") {
                r.default("run.seed", 0);
            }
            0
        }
    };
    let dt = r.num(t, "run", "dt");
    let dt = r.positive("run.dt", dt);
    if dt.is_none() && !t.contains_key("dt") && dynamical {
        r.default("run.dt", "engine stability bound");
    }
    let delta_q = r.num(t, "run", "delta_q");
    let delta_q = r.positive("run.delta_q", delta_q);
    let drift = match r.string(t, "run", "drift") {
        Some("trace-conserving") => DriftChoice::TraceConserving,
        Some("literal") => DriftChoice::Literal,
        Some(other) => {
            r.issue("run.drift", format!("unknown drift \"{other}\"; expected \"trace-conserving\" or \"literal\""));
            DriftChoice::TraceConserving
        }
        None => {
            if !t.contains_key("drift") && used("drift") {
                r.default("run.drift", "trace-conserving");
            }
            DriftChoice::TraceConserving
        }
    };
    let quadrature_tol = match r.num(t, "run", "quadrature_tol") {
        Some(v) if v <= 0.0 || v >= 1.0 => {
            r.issue("run.quadrature_tol", "must lie in (0, 1)");
            1e-12
        }
        Some(v) => v,
        None => {
            if !t.contains_key("quadrature_tol") && used("quadrature_tol") {
                r.default("run.quadrature_tol", 1e-12);
            }
            1e-12
        }
    };
    RunBlock { t_max, n_outputs, dt, dim, trajectories, seed, half_width, points, delta_q, drift, residue_terms, quadrature_tol }
}

fn parse_sweep(r: &mut Reader, root: &Table) -> Vec<SweepAxis> {
    let Some(t) = r.table(root, "", "sweep") else { return Vec::new() };
    let mut axes = Vec::new();
    for (key, value) in t {
        let path = join("sweep", key);
        if !SWEEP_AXES.contains(&key.as_str()) {
            let msg = match suggest(key, SWEEP_AXES) {
                Some(s) => format!("cannot sweep this key; did you mean \"{s}\"?"),
                None => format!("cannot sweep this key; sweepable: {}", SWEEP_AXES.join(", ")),
            };
            r.issue(path, msg);
            continue;
        }
        let values = match value {
            Value::String(s) => sweep::parse_axis(s),
            Value::Array(a) => {
                let nums: Option<Vec<f64>> = a
                    .iter()
                    .map(|v| match v {
                        Value::Float(x) => Some(*x),
                        Value::Integer(i) => Some(*i as f64),
                        _ => None,
                    })
                    .collect();
                match nums {
                    Some(v) => sweep::from_values(v),
                    None => {
                        r.issue(path, "sweep arrays must hold numbers");
                        continue;
                    }
                }
            }
            _ => {
                r.issue(path, "expected an array of numbers or a string such as \"logspace(0, 9, 10)\"");
                continue;
            }
        };
        match values {
            Ok(v) => axes.push(SweepAxis { name: key.clone(), values: v }),
            Err(e) => r.issue(path, e.to_string()),
        }
    }
    axes.sort_by(|a, b| a.name.cmp(&b.name));
    axes
}

fn parse_relaxation(r: &mut Reader, root: &Table) -> Option<Relaxation> {
    let t = r.table(root, "", "relaxation")?;
    r.check_keys(t, "relaxation", RELAX_KEYS);
    let tau_r = r.required_num(t, "relaxation", "tau_R");
    let k_s = r.required_num(t, "relaxation", "K_s");
    let k_eq = r.required_num(t, "relaxation", "K_eq");
    let tau_r = r.positive("relaxation.tau_R", tau_r);
    let k_eq = r.positive("relaxation.K_eq", k_eq);
    if let (Some(s), Some(e)) = (k_s, k_eq) {
        if s <= e {
            r.issue("relaxation.K_s", format!("must exceed K_eq = {e}"));
            return None;
        }
    }
    Some(Relaxation { tau_r: tau_r?, k_s: k_s?, k_eq: k_eq? })
}

fn parse_csl(r: &mut Reader, root: &Table) -> Option<CslBlock> {
    let t = r.table(root, "", "csl")?;
    r.check_keys(t, "csl", CSL_KEYS);
    if let Some(p) = r.string(t, "csl", "preset") {
        if p != "standard" {
            r.issue("csl.preset", format!("unknown preset \"{p}\"; the only preset is \"standard\""));
            return None;
        }
        if t.len() > 1 {
            r.issue("csl", "give either preset = \"standard\" or all of alpha, zeta, D0, S_i, n");
            return None;
        }
        let s = CslParams::standard();
        return Some(CslBlock { alpha: s.alpha, zeta: s.zeta, d0: s.d0, s_i: s.s_i, n: s.n });
    }
    let get = |r: &mut Reader, k: &str| {
        let v = r.required_num(t, "csl", k);
        r.positive(&join("csl", k), v)
    };
    let alpha = get(r, "alpha");
    let zeta = get(r, "zeta");
    let d0 = get(r, "D0");
    let s_i = get(r, "S_i");
    let n = get(r, "n");
    Some(CslBlock { alpha: alpha?, zeta: zeta?, d0: d0?, s_i: s_i?, n: n? })
}

fn parse_cross(r: &mut Reader, root: &Table) -> Vec<Engine> {
    let Some(t) = r.table(root, "", "cross") else { return Vec::new() };
    r.check_keys(t, "cross", CROSS_KEYS);
    let mut out = Vec::new();
    match t.get("against") {
        Some(Value::Array(a)) => {
            for (k, v) in a.iter().enumerate() {
                let path = format!("cross.against[{k}]");
                match v.as_str() {
                    Some(s) => match Engine::parse(s) {
                        Some(e) if !out.contains(&e) => out.push(e),
                        Some(_) => r.issue(path, "listed twice"),
                        None => r.issue(path, format!("unknown engine \"{s}\"")),
                    },
                    None => r.issue(path, "expected an engine name"),
                }
            }
        }
        Some(_) => r.issue("cross.against", "expected an array of engine names"),
        None => r.issue("cross.against", "required"),
    }
    out
}

fn parse_outputs(r: &mut Reader, root: &Table) -> Option<Vec<String>> {
    match root.get("outputs")? {
        Value::Array(a) => {
            let mut v = Vec::new();
            for (k, x) in a.iter().enumerate() {
                match x.as_str() {
                    Some(s) => v.push(s.to_string()),
                    None => r.issue(format!("outputs[{k}]"), "expected a string"),
                }
            }
            Some(v)
        }
        _ => {
            r.issue("outputs", "expected an array of observable names");
            None
        }
    }
}

/// Whether an observable can be produced given the rest of the scenario.
fn prerequisite(s: &Scenario, o: &Observable) -> Result<(), String> {
    let has_dq = s.run.delta_q.is_some() || s.sweep.iter().any(|a| a.name == "delta_q");
    match (s.engine, o.name) {
        (Engine::Oracles, _) if o.kind == Kind::Series => {
            if s.initial_state.is_none() || s.run.t_max.is_none() {
                return Err("needs [initial_state] and run.t_max".into());
            }
        }
        (Engine::Oracles, "tau_D" | "tau_D_low_frequency" | "zeta") if !has_dq => return Err("needs run.delta_q".into()),
        (Engine::Oracles, "Lambda_est") if s.relaxation.is_none() => return Err("needs a [relaxation] table".into()),
        (Engine::Oracles, "lambda_CM_inv") if s.csl.is_none() || s.units != UnitChoice::Cgs => {
            return Err("needs a [csl] table and CGS units".into())
        }
        (Engine::Grid, "zeta_fit" | "zeta_fit_stderr" | "zeta_oracle") if !matches!(s.initial_state, Some(InitialState::Cat { .. })) => {
            return Err("needs a cat initial state".into())
        }
        _ => {}
    }
    Ok(())
}

fn default_outputs(s: &Scenario) -> Vec<String> {
    s.engine.observables().iter().filter(|o| prerequisite(s, o).is_ok()).map(|o| o.name.to_string()).collect()
}

fn check_semantics(r: &mut Reader, s: &Scenario) {
    let engines: Vec<Engine> = std::iter::once(s.engine).chain(s.cross.iter().copied()).collect();
    for e in &engines {
        match (&s.initial_state, e.is_dynamical()) {
            (None, true) => r.issue("initial_state", format!("required by the {e} engine")),
            // the oracle side of a cat cross-check compares the coherence decay only
            (Some(InitialState::Cat { .. }), _) if *e == Engine::Oracles && s.engine != Engine::Oracles => {}
            (Some(st), _) if !e.accepts(st) && !(matches!(e, Engine::Grwp | Engine::Integral)) => {
                r.issue("initial_state.kind", format!("not supported by the {e} engine"))
            }
            _ => {}
        }
        if e.is_dynamical() && s.params.dims != 1 {
            r.issue("params.dims", format!("the {e} engine is one-dimensional"));
        }
    }
    if matches!(s.engine, Engine::Grwp | Engine::Integral) && s.initial_state.is_some() {
        r.issue("initial_state", format!("not used by the {} engine", s.engine));
    }
    if s.engine == Engine::Grwp {
        if s.units != UnitChoice::Cgs {
            r.issue("units.system", "the grwp engine works in CGS only");
        }
        if s.csl.is_none() {
            r.issue("csl", "required by the grwp engine");
        }
    }
    if s.engine == Engine::Integral {
        let hot = match (s.params.temperature, s.params.nbar) {
            (Some(t), _) => t > 0.0,
            (_, Some(n)) => n > 0.0,
            _ => true,
        };
        if !hot && !s.sweep.iter().any(|a| a.name == "T" || a.name == "nbar") {
            r.issue("params.T", "the integral engine needs T > 0");
        }
    }
    if s.relaxation.is_some() && s.engine != Engine::Oracles {
        r.issue("relaxation", format!("not used by the {} engine", s.engine));
    }
    if s.csl.is_some() && !matches!(s.engine, Engine::Oracles | Engine::Grwp) {
        r.issue("csl", format!("not used by the {} engine", s.engine));
    }
    for a in &s.sweep {
        let path = join("sweep", &a.name);
        match (a.name.as_str(), s.units) {
            ("m" | "omega", UnitChoice::Engine) => r.issue(path, "m and omega are fixed to 1 in engine units"),
            ("nbar", UnitChoice::Cgs) => r.issue(path, "sweep T instead in CGS units"),
            ("nbar", _) if s.params.temperature.is_some() => r.issue(path, "params gives T; sweep T or switch params to nbar"),
            ("T", _) if s.params.nbar.is_some() => r.issue(path, "params gives nbar; sweep nbar or switch params to T"),
            ("delta_q", _) if s.engine != Engine::Oracles => r.issue(path, format!("not used by the {} engine", s.engine)),
            _ => {}
        }
    }
    if !s.cross.is_empty() {
        if !s.sweep.is_empty() {
            r.issue("cross", "cross-validation runs a single parameter point; remove [sweep]");
        }
        for (k, e) in s.cross.iter().enumerate() {
            if !comparable(s.engine, *e) {
                r.issue(format!("cross.against[{k}]"), format!("no comparison defined between {} and {e}", s.engine));
            }
        }
    }
    if engines.contains(&Engine::Grid) && s.run.n_outputs < 3 && matches!(s.initial_state, Some(InitialState::Cat { .. })) {
        r.issue("run.n_outputs", "the decay fit needs at least 3 outputs");
    }

    // every sweep point must give valid physics
    let axes: BTreeMap<String, Vec<f64>> = s.sweep.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
    let plan = sweep::plan(&axes).unwrap_or_else(|e| {
        r.issue("sweep", e.to_string());
        Vec::new()
    });
    let mut bad = 0;
    for point in plan {
        if let Err(e) = s.at_point(&point) {
            bad += 1;
            if bad <= 5 {
                let at = if point.is_empty() {
                    "params".to_string()
                } else {
                    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
                };
                r.issue(if point.is_empty() { "params".to_string() } else { format!("sweep point {at}") }, e.to_string());
            }
        }
    }
    if bad > 5 {
        r.issue("sweep", format!("{} more sweep points are invalid", bad - 5));
    }

    if bad == 0 && (engines.contains(&Engine::Lindblad) || engines.contains(&Engine::Ito)) {
        if let Some(alpha) = s.initial_state.and_then(|st| st.alpha()) {
            if !truncation_adequate(alpha, s.run.dim) {
                r.issue(
                    "run.dim",
                    format!("dim = {} is too small for |alpha| = {:.3}; need |alpha|^2 + 4|alpha| + 6", s.run.dim, alpha.norm()),
                );
            }
        }
        if let Some(InitialState::Fock { n }) = s.initial_state {
            if n >= s.run.dim {
                r.issue("initial_state.n", format!("must be below run.dim = {}", s.run.dim));
            }
        }
    }
    if let Some(InitialState::Cat { sigma: Some(_), .. }) = s.initial_state {
        if engines.iter().any(|e| matches!(e, Engine::Lindblad | Engine::Ito)) {
            r.issue("initial_state.sigma", "only the grid engine takes a packet width; Fock cats use coherent lobes");
        }
    }
    if engines.contains(&Engine::Grid) {
        if let (Some(l), Some(n)) = (s.run.half_width, s.run.points) {
            if let Err(e) = GridSpec::new(l, n) {
                r.issue("run", e.to_string());
            } else if bad == 0 && s.initial_state.is_some() {
                for msg in crate::engines::preflight(s) {
                    r.issue("initial_state", msg);
                }
            }
        }
    }
}

pub fn parse_str(src: &str) -> Result<Scenario, ScenarioError> {
    let root: Table = toml::from_str(src)
        .map_err(|e| ScenarioError::Invalid(vec![Issue { path: String::new(), message: format!("TOML syntax: {}", e.message()) }]))?;
    let mut r = Reader { issues: Vec::new(), defaults: Vec::new() };
    r.check_keys(&root, "", TOP_KEYS);

    let name = match r.string(&root, "", "name") {
        Some(n) if !n.trim().is_empty() => Some(n.to_string()),
        Some(_) => {
            r.issue("name", "must not be empty");
            None
        }
        None => {
            if !root.contains_key("name") {
                r.issue("name", "required");
            }
            None
        }
    };
    let description = r.string(&root, "", "description").map(str::to_string);
    let engine = match r.string(&root, "", "engine") {
        Some(e) => match Engine::parse(e) {
            Some(x) => Some(x),
            None => {
                let names: Vec<_> = Engine::ALL.iter().map(|e| e.name()).collect();
                let hint = suggest(e, &names).map(|s| format!("; did you mean \"{s}\"?")).unwrap_or_default();
                r.issue("engine", format!("unknown engine \"{e}\"{hint}"));
                None
            }
        },
        None => {
            if !root.contains_key("engine") {
                r.issue("engine", "required");
            }
            None
        }
    };
    let units = parse_units(&mut r, &root);
    let params = parse_params(&mut r, &root, units, engine);
    let initial_state = parse_initial_state(&mut r, &root);
    let cross = parse_cross(&mut r, &root);
    let engines: Vec<Engine> = engine.into_iter().chain(cross.iter().copied()).collect();
    let run = parse_run(&mut r, &root, &engines);
    let sweep = parse_sweep(&mut r, &root);
    let relaxation = parse_relaxation(&mut r, &root);
    let csl = parse_csl(&mut r, &root);
    let outputs = parse_outputs(&mut r, &root);

    let (Some(name), Some(engine), Some(units), Some(params), Some(initial_state)) = (name, engine, units, params, initial_state) else {
        return Err(ScenarioError::Invalid(r.issues));
    };
    let mut s = Scenario {
        name,
        description,
        engine,
        units,
        params,
        initial_state,
        run,
        sweep,
        outputs: Vec::new(),
        relaxation,
        csl,
        cross,
        defaults: Vec::new(),
    };
    match outputs {
        Some(list) => {
            if list.is_empty() {
                r.issue("outputs", "must name at least one observable");
            }
            let names: Vec<&str> = engine.observables().iter().map(|o| o.name).collect();
            for (k, o) in list.iter().enumerate() {
                match s.observable(o) {
                    Some(obs) => {
                        if let Err(why) = prerequisite(&s, &obs) {
                            r.issue(format!("outputs[{k}]"), format!("\"{o}\" {why}"));
                        }
                    }
                    None => {
                        let hint = suggest(o, &names).map(|x| format!("; did you mean \"{x}\"?")).unwrap_or_default();
                        r.issue(format!("outputs[{k}]"), format!("the {engine} engine has no observable \"{o}\"{hint}"));
                    }
                }
            }
            s.outputs = list;
        }
        None => {
            s.outputs = default_outputs(&s);
            r.default("outputs", s.outputs.join(","));
            if s.outputs.is_empty() {
                r.issue("outputs", format!("nothing the {engine} engine can report with this scenario"));
            }
        }
    }
    check_semantics(&mut r, &s);
    if !r.issues.is_empty() {
        return Err(ScenarioError::Invalid(r.issues));
    }
    s.defaults = r.defaults;
    Ok(s)
}
