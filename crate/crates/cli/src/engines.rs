//! One sweep point through one engine.
//!
//! Dynamical engines run in ℏ = m = ω = 1 units; CGS scenarios are mapped in
//! with [`UnitSystem::natural_for`] and every reported value is mapped back.
//! The closed-form engines work directly in the scenario's units.

use declab_core::fock::{coherent_state, superposition_state, thermal_state, DensityMatrix, StateVector};
use declab_core::grid::{build_rhs_with, evolve_grid, fit_offdiag_decay, DriftConvention, GridDensity, GridSpec};
use declab_core::grwp::{csl_energy_rate, delta_i, lambda_cm};
use declab_core::ito::{run_ensemble_with, StepScheme, Unraveling, WienerConfig};
use declab_core::lindblad::{build_generator, evolve_master, ObservableSet, Rk4};
use declab_core::oracles::{
    decoherence_time, diffusion_constant, entropy_poly, equilibrium_kinetic, estimate_lambda, first_moments, kinetic_energy,
    offdiag_decay_rate, second_moments, DecoherenceQuery, DecoherenceRegime, InitialMoments, Moments, CALDEIRA_LEGGETT_TAU_D,
};
use declab_core::spectrum::{integral_i_full_line_quadrature, integral_i_residue, LorentzianSpectrum, ThermalParams};
use declab_core::units::to_engine_units;
use declab_core::{ModelParams, UnitSystem, C64};
use thiserror::Error;

use crate::observables::Dim;
use crate::scenario::{DriftChoice, Engine, InitialState, Scenario, UnitChoice};
use crate::sweep::SweepPoint;

#[derive(Debug, Clone, Error)]
#[error("{engine} engine{at}: {message}")]
pub struct EngineError {
    pub engine: Engine,
    /// " at T=3, N=10" or empty.
    pub at: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct PointOutput {
    /// Output times in scenario units.
    pub times: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
    pub scalars: Vec<(String, f64)>,
    /// (label, seconds or engine time) for the comparison table.
    pub timescales: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    /// Engine-unit states, kept for cross-validation.
    pub states: Vec<DensityMatrix>,
}

impl PointOutput {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Engine-unit parameters and the scales that produced them.
struct Frame {
    model: ModelParams,
    units: UnitSystem,
}

impl Frame {
    fn new(model: &ModelParams, choice: UnitChoice) -> Result<Frame, String> {
        match choice {
            UnitChoice::Engine => Ok(Frame { model: *model, units: UnitSystem::identity() }),
            UnitChoice::Cgs => {
                let units = UnitSystem::natural_for(model).map_err(|e| e.to_string())?;
                let model = to_engine_units(model, &units).map_err(|e| e.to_string())?;
                Ok(Frame { model, units })
            }
        }
    }

    fn out(&self, d: Dim, v: f64) -> f64 {
        v * d.cgs_factor(&self.units)
    }

    fn length_in(&self, v: f64) -> f64 {
        v / self.units.scale_length
    }

    fn momentum_in(&self, v: f64) -> f64 {
        v * self.units.scale_time / (self.units.scale_mass * self.units.scale_length)
    }
}

fn err(s: &Scenario, point: &SweepPoint, e: impl ToString) -> EngineError {
    let at = if point.is_empty() {
        String::new()
    } else {
        format!(" at {}", point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", "))
    };
    EngineError { engine: s.engine, at, message: e.to_string() }
}

/// Engine-unit density matrix of the initial state on `d` Fock levels.
fn fock_state(state: &InitialState, model: &ModelParams, frame: &Frame, d: usize) -> Result<(DensityMatrix, Option<StateVector>), String> {
    let e = |x: declab_core::fock::FockError| x.to_string();
    Ok(match *state {
        InitialState::Coherent { alpha } => {
            let psi = coherent_state(C64::new(alpha[0], alpha[1]), d).map_err(e)?;
            (psi.to_density(), Some(psi))
        }
        InitialState::Thermal { nbar } => (thermal_state(nbar, d).map_err(e)?, None),
        InitialState::Fock { n } => {
            let psi = StateVector::basis(d, n);
            (psi.to_density(), Some(psi))
        }
        InitialState::Cat { alpha, separation, .. } => {
            let psi = superposition_state(model, C64::new(alpha[0], alpha[1]), frame.length_in(separation), d).map_err(e)?;
            (psi.to_density(), Some(psi))
        }
        InitialState::Gaussian { .. } => return Err("a Gaussian packet has no Fock representation here; use coherent".into()),
    })
}

pub(crate) fn engine_times(s: &Scenario, frame_scale_time: f64) -> Vec<f64> {
    s.run.times().into_iter().map(|t| t / frame_scale_time).collect()
}

const MOMENT_NAMES: [&str; 6] = ["Q", "P", "Q2", "QP", "P2", "K"];
const MOMENT_DIMS: [Dim; 6] = [
    crate::observables::dim(0, 1, 0),
    crate::observables::dim(1, 1, -1),
    crate::observables::dim(0, 2, 0),
    crate::observables::dim(1, 2, -1),
    crate::observables::dim(2, 2, -2),
    crate::observables::dim(1, 2, -2),
];

fn run_lindblad(s: &Scenario, model: &ModelParams, point: &SweepPoint) -> Result<PointOutput, EngineError> {
    let frame = Frame::new(model, s.units).map_err(|e| err(s, point, e))?;
    let pe = frame.model;
    let d = s.run.dim;
    let state = s.initial_state.as_ref().expect("validated");
    let (rho0, _) = fock_state(state, &pe, &frame, d).map_err(|e| err(s, point, e))?;
    let gen = build_generator(&pe, d).map_err(|e| err(s, point, e))?;
    let dt = s.run.dt.map(|x| x / frame.units.scale_time).unwrap_or_else(|| gen.max_dt());
    let obs = ObservableSet::cm(&pe, d).map_err(|e| err(s, point, e))?;
    let t = engine_times(s, frame.units.scale_time);
    let rec = evolve_master(&gen, &rho0, &t, Rk4 { dt }, &obs).map_err(|e| err(s, point, e))?;
    let mut out = PointOutput { times: s.run.times(), ..Default::default() };
    for (name, d) in MOMENT_NAMES.iter().zip(MOMENT_DIMS) {
        let v = rec.get(name).expect("cm observable");
        out.series.push((name.to_string(), v.iter().map(|x| frame.out(d, *x)).collect()));
    }
    for name in ["purity", "S_l", "S_s"] {
        out.series.push((name.to_string(), rec.get(name).expect("state observable").to_vec()));
    }
    out.series.push(("trace_error".into(), rec.invariants.iter().map(|r| r.trace_error).collect()));
    out.series.push(("min_eigenvalue".into(), rec.invariants.iter().map(|r| r.min_eigenvalue).collect()));
    if !rec.gates_passed() {
        let w = rec.worst_invariants();
        out.warnings.push(format!(
            "invariant gates exceeded{}: trace {:e}, Hermiticity {:e}, min eigenvalue {:e}",
            err(s, point, "").at,
            w.trace_error,
            w.hermiticity_error,
            w.min_eigenvalue
        ));
    }
    if let Some(w) = edge_warning(&rec.states) {
        out.warnings.push(format!("{w}{}", err(s, point, "").at));
    }
    out.states = rec.states;
    Ok(out)
}

/// Largest weight in the top three Fock levels, if it is large enough to
/// distort the moments.
fn edge_warning(states: &[DensityMatrix]) -> Option<String> {
    let edge = states
        .iter()
        .map(|r| {
            let d = r.dim();
            (d.saturating_sub(3)..d).map(|k| r.matrix[(k, k)].re).sum::<f64>()
        })
        .fold(0.0, f64::max);
    (edge > 1e-6).then(|| format!("population {edge:.1e} reaches the top of the Fock basis; raise run.dim or shorten run.t_max"))
}

fn run_ito(s: &Scenario, model: &ModelParams, point: &SweepPoint, seed: u64) -> Result<PointOutput, EngineError> {
    let frame = Frame::new(model, s.units).map_err(|e| err(s, point, e))?;
    let pe = frame.model;
    let d = s.run.dim;
    let state = s.initial_state.as_ref().expect("validated");
    let (_, psi0) = fock_state(state, &pe, &frame, d).map_err(|e| err(s, point, e))?;
    let psi0 = psi0.ok_or_else(|| err(s, point, "the ito engine needs a pure initial state"))?;
    let t = engine_times(s, frame.units.scale_time);
    let max = 0.01 / pe.omega.max(pe.damping());
    let requested = s.run.dt.map(|x| x / frame.units.scale_time).unwrap_or(max);
    if requested > max * (1.0 + 1e-12) {
        return Err(err(s, point, format!("dt = {requested} exceeds the bound {max} (engine units)")));
    }
    // largest step ≤ the request that divides the output spacing
    let spacing = t[1] - t[0];
    let dt = spacing / ((spacing / requested) * (1.0 - 1e-12)).ceil();
    let gen = build_generator(&pe, d).map_err(|e| err(s, point, e))?;
    let un = Unraveling::from_generator(&gen, dt, StepScheme::ExponentialEulerMaruyama).map_err(|e| err(s, point, e))?;
    let cfg = WienerConfig::new(pe.lambda, dt, seed, un.n_channels()).map_err(|e| err(s, point, e))?;
    let ens = run_ensemble_with(&un, &psi0, s.run.trajectories, &t, &cfg).map_err(|e| err(s, point, e))?;
    let obs = ObservableSet::cm(&pe, d).map_err(|e| err(s, point, e))?;
    let mut out = PointOutput { times: s.run.times(), ..Default::default() };
    let raw_moments: Vec<[f64; 6]> = ens
        .reconstruction
        .iter()
        .map(|rho| {
            let mut m = [0.0; 6];
            for (i, name) in MOMENT_NAMES.iter().enumerate() {
                let op = &obs.ops.iter().find(|(n, _)| n == name).expect("cm observable").1;
                m[i] = rho.expect(op).re;
            }
            m
        })
        .collect();
    for (i, (name, d)) in MOMENT_NAMES.iter().zip(MOMENT_DIMS).enumerate() {
        out.series.push((name.to_string(), raw_moments.iter().map(|m| frame.out(d, m[i])).collect()));
    }
    out.series.push(("purity".into(), ens.reconstruction.iter().map(|r| r.purity()).collect()));
    out.series.push(("norm_sqr".into(), ens.mean_norm_sqr.clone()));
    out.series.push(("norm_sqr_stderr".into(), ens.norm_sqr_stderr.clone()));
    if ens.resampled > 0 {
        out.warnings.push(format!("{} of {} trajectories were restarted after leaving the norm window", ens.resampled, ens.n_traj));
    }
    out.states = ens.reconstruction;
    Ok(out)
}

/// Grid spec, packet and (for cats) the lobe positions, in engine units.
pub(crate) type GridSetup = (GridSpec, GridDensity, Option<(f64, f64)>);

pub(crate) fn grid_setup(s: &Scenario, frame_model: &ModelParams, scales: &UnitSystem) -> Result<GridSetup, String> {
    let frame = Frame { model: *frame_model, units: *scales };
    let (Some(half_width), Some(points), Some(state)) = (s.run.half_width, s.run.points, s.initial_state) else {
        return Err("the grid needs run.half_width, run.points and an initial state".into());
    };
    let spec = GridSpec::new(frame.length_in(half_width), points).map_err(|e| e.to_string())?;
    let n = frame.model.n_particles;
    // ⟨Q⟩ per unit Re α and the vacuum width of the collective mode
    let q_per_alpha = (2.0 / n).sqrt();
    let p_per_alpha = (2.0 * n).sqrt();
    let vacuum = (0.5 / n).sqrt();
    let e = |x: declab_core::grid::GridError| x.to_string();
    Ok(match state {
        InitialState::Coherent { alpha } => {
            (spec, GridDensity::gaussian(spec, q_per_alpha * alpha[0], vacuum, p_per_alpha * alpha[1], 1.0).map_err(e)?, None)
        }
        InitialState::Gaussian { center, sigma, momentum } => (
            spec,
            GridDensity::gaussian(spec, frame.length_in(center), frame.length_in(sigma), frame.momentum_in(momentum), 1.0).map_err(e)?,
            None,
        ),
        InitialState::Cat { alpha, separation, sigma } => {
            if alpha[1] != 0.0 {
                return Err("grid cat states must have a real alpha".into());
            }
            let c = q_per_alpha * alpha[0];
            let sep = frame.length_in(separation);
            let sigma = sigma.map(|x| frame.length_in(x)).unwrap_or(vacuum);
            (spec, GridDensity::cat(spec, c, sep, sigma).map_err(e)?, Some((c + 0.5 * sep, c - 0.5 * sep)))
        }
        _ => return Err("state not representable on the grid".into()),
    })
}

fn run_grid(s: &Scenario, model: &ModelParams, point: &SweepPoint) -> Result<PointOutput, EngineError> {
    let frame = Frame::new(model, s.units).map_err(|e| err(s, point, e))?;
    let pe = frame.model;
    let (spec, rho0, lobes) = grid_setup(s, &pe, &frame.units).map_err(|e| err(s, point, e))?;
    let conv = match s.run.drift {
        DriftChoice::TraceConserving => DriftConvention::TraceConserving,
        DriftChoice::Literal => DriftConvention::Literal,
    };
    let op = build_rhs_with(&pe, spec, conv).map_err(|e| err(s, point, e))?;
    let dt = s.run.dt.map(|x| x / frame.units.scale_time).unwrap_or_else(|| op.max_dt());
    let t = engine_times(s, frame.units.scale_time);
    let series = evolve_grid(&op, &rho0, &t, dt).map_err(|e| err(s, point, e))?;
    let mut out = PointOutput { times: s.run.times(), ..Default::default() };
    let l = crate::observables::dim(0, 1, 0);
    let l2 = crate::observables::dim(0, 2, 0);
    let inv_l = crate::observables::dim(0, -1, 0);
    out.series.push(("trace".into(), series.stats.iter().map(|x| x.trace).collect()));
    out.series.push(("purity".into(), series.stats.iter().map(|x| x.purity).collect()));
    out.series.push(("mean_Q".into(), series.snapshots.iter().map(|x| frame.out(l, x.mean_q())).collect()));
    out.series.push(("var_Q".into(), series.snapshots.iter().map(|x| frame.out(l2, x.var_q())).collect()));
    out.series.push(("boundary_mass".into(), series.stats.iter().map(|x| x.boundary_mass).collect()));
    out.series.push(("hermiticity_error".into(), series.stats.iter().map(|x| frame.out(inv_l, x.hermiticity_error)).collect()));
    if let Some((qa, qb)) = lobes {
        let fit = fit_offdiag_decay(&series, qa, qb).map_err(|e| err(s, point, e))?;
        let oracle = offdiag_decay_rate(&pe, (qa - qb).abs());
        let rate = crate::observables::RATE;
        out.scalars.push(("zeta_fit".into(), frame.out(rate, fit.rate)));
        out.scalars.push(("zeta_fit_stderr".into(), frame.out(rate, fit.rate_stderr)));
        out.scalars.push(("zeta_oracle".into(), frame.out(rate, oracle)));
        if fit.r_squared < 0.99 {
            out.warnings.push(format!("off-diagonal decay fit has R^2 = {:.5}", fit.r_squared));
        }
    }
    Ok(out)
}

/// Initial moments straight from the state description, in `p`'s units.
fn oracle_moments(state: &InitialState, p: &ModelParams) -> Result<InitialMoments, String> {
    let hbar = p.hbar();
    let nmw = p.n_particles * p.m * p.omega;
    let vq = hbar / (2.0 * nmw);
    let vp = 0.5 * hbar * nmw;
    let m = match *state {
        InitialState::Coherent { alpha } => {
            let q = 2.0 * alpha[0] * vq.sqrt();
            let pp = 2.0 * alpha[1] * vp.sqrt();
            Moments { q, p: pp, q2: vq + q * q, qp: 2.0 * q * pp, p2: vp + pp * pp }
        }
        InitialState::Thermal { nbar } => {
            let f = 1.0 + 2.0 * nbar;
            Moments { q: 0.0, p: 0.0, q2: f * vq, qp: 0.0, p2: f * vp }
        }
        InitialState::Fock { n } => {
            let f = 1.0 + 2.0 * n as f64;
            Moments { q: 0.0, p: 0.0, q2: f * vq, qp: 0.0, p2: f * vp }
        }
        InitialState::Gaussian { center, sigma, momentum } => {
            let w = hbar / (2.0 * sigma);
            Moments {
                q: center,
                p: momentum,
                q2: sigma * sigma + center * center,
                qp: 2.0 * center * momentum,
                p2: w * w + momentum * momentum,
            }
        }
        InitialState::Cat { .. } => return Err("the oracle engine has no closed form for a cat state".into()),
    };
    InitialMoments::new(m, hbar).map_err(|e| e.to_string())
}

fn run_oracles(s: &Scenario, p: &ModelParams, delta_q: Option<f64>, point: &SweepPoint) -> Result<PointOutput, EngineError> {
    let mut out = PointOutput::default();
    let dims = p.dims;
    if let (Some(state), Some(_)) = (&s.initial_state, s.run.t_max) {
        let init = oracle_moments(state, p).map_err(|e| err(s, point, e))?;
        out.times = s.run.times();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 7];
        for &t in &out.times {
            let (q, pp) = first_moments(t, p, &init);
            let (q2, qp, p2) = second_moments(t, p, &init, dims).map_err(|e| err(s, point, e))?;
            let k = kinetic_energy(t, p, &init, dims).map_err(|e| err(s, point, e))?;
            let sl = entropy_poly(t, p, &init, dims).map_err(|e| err(s, point, e))?;
            for (c, v) in cols.iter_mut().zip([q, pp, q2, qp, p2, k, sl]) {
                c.push(v);
            }
        }
        for (name, c) in ["Q", "P", "Q2", "QP", "P2", "K", "S_l"].iter().zip(cols) {
            out.series.push((name.to_string(), c));
        }
    }
    out.scalars.push(("nbar".into(), p.nbar()));
    out.scalars.push(("thermal_factor".into(), p.thermal_factor()));
    out.scalars.push(("D".into(), diffusion_constant(p)));
    out.scalars.push(("K_eq".into(), equilibrium_kinetic(p, dims).map_err(|e| err(s, point, e))?));
    if let Some(dq) = delta_q {
        let general = DecoherenceQuery { params: *p, delta_q: dq, regime: DecoherenceRegime::General };
        let low = DecoherenceQuery { regime: DecoherenceRegime::LowFrequency, ..general };
        let tau = decoherence_time(&general).map_err(|e| err(s, point, e))?;
        let tau_low = decoherence_time(&low).map_err(|e| err(s, point, e))?;
        out.scalars.push(("tau_D".into(), tau));
        out.scalars.push(("tau_D_low_frequency".into(), tau_low));
        out.scalars.push(("zeta".into(), offdiag_decay_rate(p, dq)));
        out.timescales.push(("tau_D".into(), tau));
        out.timescales.push(("tau_D_low_frequency".into(), tau_low));
        if s.units == UnitChoice::Cgs {
            out.timescales.push(("tau_D_caldeira_leggett".into(), CALDEIRA_LEGGETT_TAU_D));
        }
    }
    if let Some(r) = &s.relaxation {
        let lam = estimate_lambda(p.n_particles, r.tau_r, r.k_s, r.k_eq).map_err(|e| err(s, point, e))?;
        out.scalars.push(("Lambda_est".into(), lam));
    }
    if let (Some(c), UnitChoice::Cgs) = (&s.csl, s.units) {
        let csl = c.params().map_err(|e| err(s, point, e))?;
        let inv = 1.0 / lambda_cm(csl.n, csl.lambda_micro);
        out.scalars.push(("lambda_CM_inv".into(), inv));
        out.timescales.push(("csl_lambda_CM_inv".into(), inv));
    }
    Ok(out)
}

fn run_grwp(s: &Scenario, p: &ModelParams, point: &SweepPoint) -> Result<PointOutput, EngineError> {
    let csl = s.csl.as_ref().expect("validated").params().map_err(|e| err(s, point, e))?;
    let lcm = lambda_cm(csl.n, csl.lambda_micro);
    let mut out = PointOutput::default();
    out.scalars.push(("lambda_micro".into(), csl.lambda_micro));
    out.scalars.push(("lambda_CM".into(), lcm));
    out.scalars.push(("lambda_CM_inv".into(), 1.0 / lcm));
    out.scalars.push(("delta_i".into(), delta_i(&csl)));
    out.scalars.push(("heating_rate".into(), csl_energy_rate(&csl, p.big_m, p.hbar())));
    out.timescales.push(("csl_lambda_CM_inv".into(), 1.0 / lcm));
    Ok(out)
}

fn run_integral(s: &Scenario, p: &ModelParams, point: &SweepPoint) -> Result<PointOutput, EngineError> {
    let spec = LorentzianSpectrum::new(p.omega, p.tau_c).map_err(|e| err(s, point, e))?;
    let tp = ThermalParams::from_physical(&spec, p.temperature, &p.consts).map_err(|e| err(s, point, e))?;
    let residue = integral_i_residue(&tp, s.run.residue_terms).map_err(|e| err(s, point, e))?;
    let quad = integral_i_full_line_quadrature(&tp, s.run.quadrature_tol).map_err(|e| err(s, point, e))?;
    let mut out = PointOutput::default();
    out.scalars.push(("p".into(), tp.p()));
    out.scalars.push(("xi".into(), tp.xi()));
    out.scalars.push(("I_residue".into(), residue));
    out.scalars.push(("I_quadrature".into(), quad));
    out.scalars.push(("I_approx".into(), p.thermal_factor()));
    out.scalars.push(("rel_difference".into(), ((residue - quad) / quad).abs()));
    Ok(out)
}

/// Run one point. `seed` feeds the trajectory engine only.
pub fn run_point(s: &Scenario, point: &SweepPoint, seed: u64) -> Result<PointOutput, EngineError> {
    let (model, delta_q) = s.at_point(point).map_err(|e| err(s, point, e))?;
    let out = match s.engine {
        Engine::Lindblad => run_lindblad(s, &model, point),
        Engine::Ito => run_ito(s, &model, point, seed),
        Engine::Grid => run_grid(s, &model, point),
        Engine::Oracles => run_oracles(s, &model, delta_q, point),
        Engine::Grwp => run_grwp(s, &model, point),
        Engine::Integral => run_integral(s, &model, point),
    }?;
    let nonfinite: Vec<&str> = out
        .series
        .iter()
        .filter(|(n, v)| s.outputs.contains(n) && v.iter().any(|x| x.is_nan()))
        .map(|(n, _)| n.as_str())
        .chain(out.scalars.iter().filter(|(n, v)| s.outputs.contains(n) && v.is_nan()).map(|(n, _)| n.as_str()))
        .collect();
    if !nonfinite.is_empty() {
        return Err(err(s, point, format!("NaN in {}", nonfinite.join(", "))));
    }
    Ok(out)
}

/// Cheap checks that need engine-unit conversion; run at validation time.
pub fn preflight(s: &Scenario) -> Vec<String> {
    let mut issues = Vec::new();
    let engines: Vec<Engine> = std::iter::once(s.engine).chain(s.cross.iter().copied()).collect();
    if !engines.contains(&Engine::Grid) {
        return issues;
    }
    for point in s.plan().iter().take(64) {
        let Ok((model, _)) = s.at_point(point) else { continue };
        match Frame::new(&model, s.units) {
            Ok(frame) => {
                if let Err(e) = grid_setup(s, &frame.model, &frame.units) {
                    issues.push(e);
                    break;
                }
            }
            Err(e) => {
                issues.push(e);
                break;
            }
        }
    }
    issues
}
