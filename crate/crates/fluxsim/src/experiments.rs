//! Scenario runners: chevron scans, leakage maps, the suppressed-transition
//! indicator, gate-duration calibration, interaction-strength studies, and
//! basis-size convergence.
//!
//! Scans are embarrassingly parallel over grid points; results are collected
//! in index order so the output never depends on the thread schedule. Gate
//! durations are read the way the device tables define them: sweep the pulse
//! duration T_d, record the source-state probability at the end of each
//! pulse, and take the first minimum of that curve. All pulses of such a
//! sweep share their rise-and-plateau prefix, so the sweep propagates the
//! prefix once and only re-runs the fall segments.

use crate::circuit::{assemble_architecture, build_bare_basis, CircuitError};
use crate::device::{DeviceSpec, Subsystem, TunableTransmonParams};
use crate::effective::{
    assemble_effective, single_tunable_adiabatic, single_tunable_nonadiabatic,
    tunable_dipole_factor, EffectiveError, EffectiveModelOptions,
};
use crate::numerics::StateVector;
use crate::operators::{StateLabel, TermSeries};
use crate::propagator::{converge_tau, propagate, PropagationPlan, PropagatorError, Trajectory};
use crate::pulse::{FluxPulse, PulseError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("empty scan grid for axis `{0}`")]
    EmptyGrid(&'static str),
    #[error("state label {0} is out of range for this model")]
    BadLabel(String),
    #[error("no transfer minimum found within the scanned window")]
    NoMinimum,
    #[error("device has no tunable pulse target")]
    NoTunableTarget,
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

/// Which Hamiltonian family a scenario runs on.
#[derive(Clone, Debug)]
pub enum Model {
    /// Bare-basis circuit model with N_m states per transmon.
    Circuit,
    /// Composite effective model (architecture I or II).
    Effective(EffectiveModelOptions),
    /// Single tunable transmon in the time-dependent harmonic basis.
    SingleNonAdiabatic(EffectiveModelOptions),
    /// Single tunable transmon, diagonal adiabatic model.
    SingleAdiabatic,
}

impl Model {
    pub fn name(&self) -> String {
        match self {
            Model::Circuit => "circuit".into(),
            Model::Effective(o) => format!(
                "effective(interaction={:?}, spectrum={:?}, drive={})",
                o.interaction, o.spectrum, o.drive_term
            ),
            Model::SingleNonAdiabatic(o) => {
                format!("single-nonadiabatic(order={})", o.expansion_order)
            }
            Model::SingleAdiabatic => "single-adiabatic".into(),
        }
    }
}

fn single_tunable_params(spec: &DeviceSpec) -> Result<TunableTransmonParams, ExperimentError> {
    match &spec.subsystems[spec.pulse_target] {
        Subsystem::Tunable { params, .. } => Ok(*params),
        _ => Err(ExperimentError::NoTunableTarget),
    }
}

/// Assemble the Hamiltonian of a scenario. `n_m` is the per-transmon basis
/// size (circuit truncation or effective ladder dimension).
pub fn build_model_series(
    spec: &DeviceSpec,
    pulse: &FluxPulse,
    model: &Model,
    n_m: usize,
) -> Result<TermSeries, ExperimentError> {
    match model {
        Model::Circuit => {
            let native = assemble_architecture(spec, pulse)?;
            let basis = build_bare_basis(spec, pulse, n_m)?;
            Ok(basis.transform_series(&native)?)
        }
        Model::Effective(options) => Ok(assemble_effective(spec, pulse, options, n_m)?),
        Model::SingleNonAdiabatic(options) => {
            let p = single_tunable_params(spec)?;
            Ok(single_tunable_nonadiabatic(&p, pulse, options, n_m)?)
        }
        Model::SingleAdiabatic => {
            let p = single_tunable_params(spec)?;
            Ok(single_tunable_adiabatic(&p, pulse, n_m)?)
        }
    }
}

fn label_index(series: &TermSeries, label: &StateLabel) -> Result<usize, ExperimentError> {
    let shape = series.shape();
    if label.0.len() != shape.num_sites() {
        return Err(ExperimentError::BadLabel(label.to_string()));
    }
    let occ = label.occupations();
    for (site, &m) in occ.iter().enumerate() {
        if m >= shape.site_dim(site) {
            return Err(ExperimentError::BadLabel(label.to_string()));
        }
    }
    Ok(shape.index_of(&occ))
}

/// One scan axis: name, unit, grid values.
#[derive(Clone, Debug)]
pub struct ScanAxis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Run provenance carried by every scan result.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub device_digest: u64,
    pub model: String,
    pub tau: f64,
    pub n_m: usize,
    pub n_c: usize,
}

/// Labelled rectangular probability grid over pulse-parameter axes; rows run
/// over the cartesian product of the axes with the last axis fastest.
#[derive(Clone, Debug)]
pub struct ScanResult {
    pub axes: Vec<ScanAxis>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ScanResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn provenance(spec: &DeviceSpec, model: &Model, tau: f64, n_m: usize) -> Provenance {
    Provenance { device_digest: spec.digest(), model: model.name(), tau, n_m, n_c: spec.n_c }
}

/// Initial state and the states whose populations a run tracks.
#[derive(Clone, Debug)]
pub struct TransitionTarget {
    pub initial: StateLabel,
    pub observables: Vec<StateLabel>,
}

impl TransitionTarget {
    pub fn new(initial: StateLabel, mut observables: Vec<StateLabel>) -> Self {
        if !observables.contains(&initial) {
            observables.insert(0, initial.clone());
        } else if observables[0] != initial {
            observables.retain(|l| l != &initial);
            observables.insert(0, initial.clone());
        }
        Self { initial, observables }
    }
}

/// Moving-average smoothing with an odd window, used before minimum
/// detection to suppress fast micromotion ripple.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1) | 1;
    let half = w / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// First deep minimum of a sampled curve: smooth, find the first basin that
/// dips below `depth`, take its lowest point, and refine with a parabola
/// through the neighbouring samples. Returns (position, value). Fast
/// micromotion ripple neither triggers nor displaces the detection.
pub fn first_deep_minimum(
    xs: &[f64],
    ys: &[f64],
    depth: f64,
    smooth_window: usize,
) -> Option<(f64, f64)> {
    if xs.len() < 3 {
        return None;
    }
    let sm = moving_average(ys, smooth_window);
    let n = sm.len();
    let start = (0..n).find(|&i| sm[i] < depth)?;
    let mut end = start;
    while end < n && sm[end] < depth {
        end += 1;
    }
    let mut best = start;
    for i in start..end {
        if sm[i] < sm[best] {
            best = i;
        }
    }
    let i = best.clamp(1, n - 2);
    let (a, b, c) = (sm[i - 1], sm[i], sm[i + 1]);
    let den = a - 2.0 * b + c;
    let offset = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    let dx = xs[i] - xs[i - 1];
    Some((xs[i] + offset.clamp(-1.0, 1.0) * dx, b))
}

/// Rule for the rise/fall time of scan pulses.
#[derive(Clone, Copy, Debug)]
pub enum RiseFallRule {
    HalfDuration,
    Fixed(f64),
}

impl RiseFallRule {
    fn t_rf(&self, t_d: f64) -> f64 {
        match self {
            RiseFallRule::HalfDuration => 0.5 * t_d,
            RiseFallRule::Fixed(v) => *v,
        }
    }
}

/// Populations at the end of a pulse over a (drive frequency, duration)
/// grid.
pub struct ChevronScenario {
    pub model: Model,
    pub n_m: usize,
    pub delta: f64,
    pub t_rf: RiseFallRule,
    pub omega_d_grid: Vec<f64>,
    pub t_d_grid: Vec<f64>,
    pub target: TransitionTarget,
    pub tau: f64,
}

pub fn chevron_scan(
    spec: &DeviceSpec,
    scenario: &ChevronScenario,
) -> Result<ScanResult, ExperimentError> {
    if scenario.omega_d_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("omega_d"));
    }
    if scenario.t_d_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("t_d"));
    }
    let phi0 = spec.pulse_target_phi0().ok_or(ExperimentError::NoTunableTarget)?;
    let points: Vec<(f64, f64)> = scenario
        .omega_d_grid
        .iter()
        .flat_map(|&w| scenario.t_d_grid.iter().map(move |&td| (w, td)))
        .collect();
    let rows: Result<Vec<Vec<f64>>, ExperimentError> = points
        .par_iter()
        .map(|&(omega_d, t_d)| {
            let pulse =
                FluxPulse::new(phi0, scenario.delta, omega_d, scenario.t_rf.t_rf(t_d), t_d)?;
            let series = build_model_series(spec, &pulse, &scenario.model, scenario.n_m)?;
            let init = label_index(&series, &scenario.target.initial)?;
            let obs: Vec<usize> = scenario
                .target
                .observables
                .iter()
                .map(|l| label_index(&series, l))
                .collect::<Result<_, _>>()?;
            let plan = PropagationPlan::new(series, scenario.tau, 0.0, t_d, t_d, obs, false)?;
            let traj = propagate(&plan, &StateVector::basis_state(plan.dim(), init))?;
            let mut row = vec![omega_d / std::f64::consts::TAU, t_d];
            row.extend(traj.probabilities.last().unwrap().iter().copied());
            Ok(row)
        })
        .collect();
    let mut columns = vec!["omega_d_ghz_over_2pi".to_string(), "t_d_ns".to_string()];
    columns.extend(scenario.target.observables.iter().map(|l| format!("p_z_{l}")));
    Ok(ScanResult {
        axes: vec![
            ScanAxis {
                name: "omega_d".into(),
                unit: "rad/ns".into(),
                values: scenario.omega_d_grid.clone(),
            },
            ScanAxis { name: "t_d".into(), unit: "ns".into(), values: scenario.t_d_grid.clone() },
        ],
        columns,
        rows: rows?,
        provenance: provenance(spec, &scenario.model, scenario.tau, scenario.n_m),
    })
}

/// Non-adiabatic leakage 1 - p^(m) at the end of a unimodal pulse, over a
/// (rise time, amplitude) grid.
pub struct LeakageScenario {
    pub model: Model,
    pub n_m: usize,
    pub level: usize,
    pub t_rf_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub t_d: f64,
    pub tau: f64,
}

pub fn leakage_map(
    spec: &DeviceSpec,
    scenario: &LeakageScenario,
) -> Result<ScanResult, ExperimentError> {
    if scenario.t_rf_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("t_rf"));
    }
    if scenario.delta_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("delta"));
    }
    let phi0 = spec.pulse_target_phi0().ok_or(ExperimentError::NoTunableTarget)?;
    let points: Vec<(f64, f64)> = scenario
        .t_rf_grid
        .iter()
        .flat_map(|&trf| scenario.delta_grid.iter().map(move |&d| (trf, d)))
        .collect();
    let label = StateLabel(vec![scenario.level]);
    let rows: Result<Vec<Vec<f64>>, ExperimentError> = points
        .par_iter()
        .map(|&(t_rf, delta)| {
            let pulse = if delta > 0.0 {
                FluxPulse::new(phi0, delta, 0.0, t_rf, scenario.t_d)?
            } else {
                FluxPulse::constant(phi0, scenario.t_d)
            };
            let series = build_model_series(spec, &pulse, &scenario.model, scenario.n_m)?;
            let init = label_index(&series, &label)?;
            let plan = PropagationPlan::new(
                series,
                scenario.tau,
                0.0,
                scenario.t_d,
                scenario.t_d,
                vec![init],
                false,
            )?;
            let traj = propagate(&plan, &StateVector::basis_state(plan.dim(), init))?;
            let p_m = traj.probabilities.last().unwrap()[0];
            Ok(vec![t_rf, delta / std::f64::consts::TAU, 1.0 - p_m])
        })
        .collect();
    Ok(ScanResult {
        axes: vec![
            ScanAxis { name: "t_rf".into(), unit: "ns".into(), values: scenario.t_rf_grid.clone() },
            ScanAxis { name: "delta".into(), unit: "rad".into(), values: scenario.delta_grid.clone() },
        ],
        columns: vec![
            "t_rf_ns".into(),
            "delta_over_2pi".into(),
            format!("one_minus_p_{}", scenario.level),
        ],
        rows: rows?,
        provenance: provenance(spec, &scenario.model, scenario.tau, scenario.n_m),
    })
}

/// Suppressed-transition indicator: epsilon = 1 - min over a pulse-parameter
/// and time grid of the survival probability of the initial state.
pub struct SearchScenario {
    pub model: Model,
    pub n_m: usize,
    pub omega_d_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub t_max: f64,
    pub t_rf: f64,
    pub sample_dt: f64,
    pub initial: StateLabel,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub epsilon: f64,
    pub argmin_omega_d: f64,
    pub argmin_delta: f64,
    pub argmin_t: f64,
    pub grid_points: usize,
}

pub fn transition_search(
    spec: &DeviceSpec,
    scenario: &SearchScenario,
) -> Result<SearchOutcome, ExperimentError> {
    if scenario.omega_d_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("omega_d"));
    }
    if scenario.delta_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("delta"));
    }
    let phi0 = spec.pulse_target_phi0().ok_or(ExperimentError::NoTunableTarget)?;
    let points: Vec<(f64, f64)> = scenario
        .omega_d_grid
        .iter()
        .flat_map(|&w| scenario.delta_grid.iter().map(move |&d| (w, d)))
        .collect();
    let minima: Result<Vec<(f64, f64)>, ExperimentError> = points
        .par_iter()
        .map(|&(omega_d, delta)| {
            let pulse = if delta > 0.0 {
                FluxPulse::new(phi0, delta, omega_d, scenario.t_rf, scenario.t_max)?
            } else {
                FluxPulse::constant(phi0, scenario.t_max)
            };
            let series = build_model_series(spec, &pulse, &scenario.model, scenario.n_m)?;
            let init = label_index(&series, &scenario.initial)?;
            let plan = PropagationPlan::new(
                series,
                scenario.tau,
                0.0,
                scenario.t_max,
                scenario.sample_dt,
                vec![init],
                false,
            )?;
            let traj = propagate(&plan, &StateVector::basis_state(plan.dim(), init))?;
            let mut best = (f64::INFINITY, 0.0);
            for (t, row) in traj.times.iter().zip(&traj.probabilities) {
                if row[0] < best.0 {
                    best = (row[0], *t);
                }
            }
            Ok(best)
        })
        .collect();
    let minima = minima?;
    let mut best_idx = 0;
    for (k, m) in minima.iter().enumerate() {
        if m.0 < minima[best_idx].0 {
            best_idx = k;
        }
    }
    Ok(SearchOutcome {
        epsilon: 1.0 - minima[best_idx].0,
        argmin_omega_d: points[best_idx].0,
        argmin_delta: points[best_idx].1,
        argmin_t: minima[best_idx].1,
        grid_points: points.len(),
    })
}

/// Gate-duration calibration: sweep the pulse duration and record the
/// tracked populations at the end of each pulse.
pub struct GateScenario {
    pub model: Model,
    pub n_m: usize,
    pub omega_d: f64,
    pub delta: f64,
    pub t_rf: f64,
    pub t_d_grid: Vec<f64>,
    pub target: TransitionTarget,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct DurationScan {
    pub t_d: Vec<f64>,
    /// p_end[k][obs] = population of observable `obs` at the end of the
    /// pulse with duration t_d[k]; the source state is observable 0.
    pub p_end: Vec<Vec<f64>>,
    pub observables: Vec<StateLabel>,
    pub provenance: Provenance,
}

impl DurationScan {
    pub fn source_curve(&self) -> Vec<f64> {
        self.p_end.iter().map(|row| row[0]).collect()
    }
}

/// Transfer time: position of the first (smoothed) deep local minimum of the
/// source-state probability versus pulse duration.
pub fn find_transfer_time(scan: &DurationScan, depth: f64) -> Result<f64, ExperimentError> {
    let ys = scan.source_curve();
    first_deep_minimum(&scan.t_d, &ys, depth, 5)
        .map(|(t, _)| t)
        .ok_or(ExperimentError::NoMinimum)
}

/// Population-cycle time, the duration reading for phase (Cz-type) gates:
/// the source population dips through the avoided crossing and must come
/// back, so the gate closes at the first maximum after the first deep
/// minimum. The returning flank is often a broad plateau carrying aliased
/// drive ripple, so the maximum search smooths harder than the basin
/// search.
pub fn find_cycle_time(scan: &DurationScan, depth: f64) -> Result<f64, ExperimentError> {
    let ys = scan.source_curve();
    let (t_min, _) = first_deep_minimum(&scan.t_d, &ys, depth, 5).ok_or(ExperimentError::NoMinimum)?;
    let sm = moving_average(&ys, 15);
    let start = scan.t_d.iter().position(|&t| t >= t_min).ok_or(ExperimentError::NoMinimum)?;
    let n = sm.len();
    let mut best: Option<usize> = None;
    for i in start + 1..n - 1 {
        if sm[i] >= sm[i - 1] && sm[i] > sm[i + 1] {
            best = Some(i);
            break;
        }
        if sm[i] > sm[i - 1] {
            best = Some(i);
        }
    }
    let i = best.ok_or(ExperimentError::NoMinimum)?.clamp(1, n - 2);
    let (a, b, c) = (sm[i - 1], sm[i], sm[i + 1]);
    let den = a - 2.0 * b + c;
    let offset = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    let dx = scan.t_d[i] - scan.t_d[i - 1];
    Ok(scan.t_d[i] + offset.clamp(-1.0, 1.0) * dx)
}

pub fn gate_run(spec: &DeviceSpec, scenario: &GateScenario) -> Result<DurationScan, ExperimentError> {
    if scenario.t_d_grid.is_empty() {
        return Err(ExperimentError::EmptyGrid("t_d"));
    }
    let phi0 = spec.pulse_target_phi0().ok_or(ExperimentError::NoTunableTarget)?;
    let t_rf = scenario.t_rf;
    let t_d_max = scenario.t_d_grid.iter().cloned().fold(0.0, f64::max);

    // Shared prefix: every candidate pulse agrees on [0, t_d - t_rf], so one
    // long-plateau run snapshots the state at each candidate's fall start.
    let prefix_pulse =
        FluxPulse::new(phi0, scenario.delta, scenario.omega_d, t_rf, 2.0 * t_d_max)?;
    let prefix_series = build_model_series(spec, &prefix_pulse, &scenario.model, scenario.n_m)?;
    let init = label_index(&prefix_series, &scenario.target.initial)?;
    let obs: Vec<usize> = scenario
        .target
        .observables
        .iter()
        .map(|l| label_index(&prefix_series, l))
        .collect::<Result<_, _>>()?;

    let stride = snapshot_stride(&scenario.t_d_grid, t_rf, scenario.tau);
    let prefix_end = t_d_max - t_rf;
    let plan = PropagationPlan::new(
        prefix_series,
        scenario.tau,
        0.0,
        prefix_end,
        stride,
        obs.clone(),
        true,
    )?;
    let prefix = propagate(&plan, &StateVector::basis_state(plan.dim(), init))?;
    let states = prefix.states.as_ref().expect("states stored");

    let rows: Result<Vec<Vec<f64>>, ExperimentError> = scenario
        .t_d_grid
        .par_iter()
        .map(|&t_d| {
            let pulse = FluxPulse::new(phi0, scenario.delta, scenario.omega_d, t_rf, t_d)?;
            let series = build_model_series(spec, &pulse, &scenario.model, scenario.n_m)?;
            let fall_start = t_d - t_rf;
            let snap_idx = ((fall_start / stride).round() as usize).min(states.len() - 1);
            let psi = &states[snap_idx];
            let plan =
                PropagationPlan::new(series, scenario.tau, fall_start, t_d, t_rf, obs.clone(), false)?;
            let traj = propagate(&plan, psi)?;
            Ok(traj.probabilities.last().unwrap().clone())
        })
        .collect();
    Ok(DurationScan {
        t_d: scenario.t_d_grid.clone(),
        p_end: rows?,
        observables: scenario.target.observables.clone(),
        provenance: provenance(spec, &scenario.model, scenario.tau, scenario.n_m),
    })
}

fn snapshot_stride(t_d_grid: &[f64], t_rf: f64, tau: f64) -> f64 {
    // the sampling stride must divide every fall start; reduce the grid
    // spacing and the first fall start with a float gcd, then clamp to a
    // multiple of tau
    let mut step =
        if t_d_grid.len() > 1 { t_d_grid[1] - t_d_grid[0] } else { (t_d_grid[0] - t_rf).max(tau) };
    let mut shift = t_d_grid[0] - t_rf;
    for _ in 0..64 {
        if step < 1e-9 {
            break;
        }
        let r = shift % step;
        shift = step;
        step = if r < 1e-9 || (step - r) < 1e-9 { 0.0 } else { r };
    }
    let g = if step < 1e-9 { shift } else { step };
    let per = (g / tau).round().max(1.0);
    per * tau
}

/// One trajectory of the interaction-strength scaling study plus the
/// position of the first minimum of the source-state population in time.
#[derive(Clone, Debug)]
pub struct ScalingRun {
    pub delta_star: f64,
    pub trajectory: Trajectory,
    pub first_min_t: Option<f64>,
}

/// Architecture-I scaling experiment: the frequency modulation keeps the
/// amplitude `delta` while the interaction strengths follow a pulse with
/// amplitude `delta_star`.
pub struct ScalingScenario {
    pub n_m: usize,
    pub omega_d: f64,
    pub delta: f64,
    pub delta_star_grid: Vec<f64>,
    pub t_rf: f64,
    pub t_d: f64,
    pub target: TransitionTarget,
    pub tau: f64,
}

pub fn interaction_scaling(
    spec: &DeviceSpec,
    scenario: &ScalingScenario,
) -> Result<Vec<ScalingRun>, ExperimentError> {
    let phi0 = spec.pulse_target_phi0().ok_or(ExperimentError::NoTunableTarget)?;
    scenario
        .delta_star_grid
        .par_iter()
        .map(|&delta_star| {
            let options = EffectiveModelOptions {
                g_pulse_delta: Some(delta_star),
                ..EffectiveModelOptions::case_b()
            };
            let pulse = FluxPulse::new(
                phi0,
                scenario.delta,
                scenario.omega_d,
                scenario.t_rf,
                scenario.t_d,
            )?;
            let series =
                build_model_series(spec, &pulse, &Model::Effective(options), scenario.n_m)?;
            let init = label_index(&series, &scenario.target.initial)?;
            let obs: Vec<usize> = scenario
                .target
                .observables
                .iter()
                .map(|l| label_index(&series, l))
                .collect::<Result<_, _>>()?;
            let plan =
                PropagationPlan::new(series, scenario.tau, 0.0, scenario.t_d, 0.2, obs, false)?;
            let traj = propagate(&plan, &StateVector::basis_state(plan.dim(), init))?;
            let ps = traj.probability_series(0);
            let first_min_t = first_deep_minimum(&traj.times, &ps, 0.5, 15).map(|(t, _)| t);
            Ok(ScalingRun { delta_star, trajectory: traj, first_min_t })
        })
        .collect()
}

/// Effective interaction strength of one coupling as a function of the
/// external flux of its tunable end.
pub fn interaction_curve_vs_flux(
    g_bare: f64,
    static_factor: f64,
    tunable_end: &TunableTransmonParams,
    phi_grid: &[f64],
) -> Vec<(f64, f64)> {
    phi_grid
        .iter()
        .map(|&phi| (phi, g_bare * static_factor * tunable_dipole_factor(tunable_end, phi)))
        .collect()
}

/// Same strength as a function of time under a flux pulse.
pub fn interaction_curve_vs_time(
    g_bare: f64,
    static_factor: f64,
    tunable_end: &TunableTransmonParams,
    pulse: &FluxPulse,
    dt: f64,
) -> Vec<(f64, f64)> {
    let n = (pulse.t_d / dt).round() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            (t, g_bare * static_factor * tunable_dipole_factor(tunable_end, pulse.flux(t)))
        })
        .collect()
}

/// Deviation of the plain-quartic and adjusted spectrum models from the
/// exact charge-basis gaps, per flux grid point, for level gap `m`.
/// Columns: (phi, plain deviation, adjusted deviation), all rad/ns.
pub fn spectrum_deviation_sweep(
    p: &TunableTransmonParams,
    phi_grid: &[f64],
    m: usize,
    n_c: usize,
) -> Result<Vec<(f64, f64, f64)>, ExperimentError> {
    use crate::effective::{AdjustedSpectrumTable, SpectrumApproximation, spectrum_deviation};
    let lo = phi_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = phi_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.01 * std::f64::consts::TAU;
    let table = AdjustedSpectrumTable::build(p, lo - pad, hi + pad, 0.001 * std::f64::consts::TAU, n_c)?;
    phi_grid
        .iter()
        .map(|&phi| {
            let plain = spectrum_deviation(
                m,
                phi,
                SpectrumApproximation::PlainQuartic,
                p,
                None,
                None,
                n_c,
            )?;
            let adjusted = spectrum_deviation(
                m,
                phi,
                SpectrumApproximation::Adjusted,
                p,
                Some(&table),
                None,
                n_c,
            )?;
            Ok((phi, plain, adjusted))
        })
        .collect()
}

/// Basis-size convergence: rerun a scenario per N_m and report the largest
/// pointwise probability deviation between consecutive sizes.
pub struct BasisScenario {
    pub model: Model,
    pub pulse: FluxPulse,
    pub target: TransitionTarget,
    pub t_end: f64,
    pub sample_dt: f64,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct BasisConvergence {
    pub n_m: Vec<usize>,
    /// deviations[k] = max |p at n_m[k+1] - p at n_m[k]| over samples and
    /// tracked states.
    pub deviations: Vec<f64>,
}

pub fn converge_basis(
    spec: &DeviceSpec,
    scenario: &BasisScenario,
    n_m_list: &[usize],
) -> Result<BasisConvergence, ExperimentError> {
    assert!(n_m_list.windows(2).all(|w| w[0] < w[1]), "N_m list must ascend");
    let runs: Result<Vec<Trajectory>, ExperimentError> = n_m_list
        .par_iter()
        .map(|&n_m| {
            let series = build_model_series(spec, &scenario.pulse, &scenario.model, n_m)?;
            let init = label_index(&series, &scenario.target.initial)?;
            let obs: Vec<usize> = scenario
                .target
                .observables
                .iter()
                .map(|l| label_index(&series, l))
                .collect::<Result<_, _>>()?;
            let plan = PropagationPlan::new(
                series,
                scenario.tau,
                0.0,
                scenario.t_end,
                scenario.sample_dt,
                obs,
                false,
            )?;
            Ok(propagate(&plan, &StateVector::basis_state(plan.dim(), init))?)
        })
        .collect();
    let runs = runs?;
    let deviations = runs
        .windows(2)
        .map(|w| crate::propagator::max_probability_deviation(&w[0], &w[1]))
        .collect();
    Ok(BasisConvergence { n_m: n_m_list.to_vec(), deviations })
}

/// Converge the time step on a pilot trajectory and return tau*.
pub fn pilot_tau(
    spec: &DeviceSpec,
    pulse: &FluxPulse,
    model: &Model,
    n_m: usize,
    initial: &StateLabel,
    t_end: f64,
    tau0: f64,
    tol: f64,
) -> Result<f64, ExperimentError> {
    let series = build_model_series(spec, pulse, model, n_m)?;
    let init = label_index(&series, initial)?;
    let plan = PropagationPlan::new(series, tau0, 0.0, t_end, 0.2, vec![init], false)?;
    let (report, _) = converge_tau(&plan, &StateVector::basis_state(plan.dim(), init), tol)?;
    Ok(report.tau_star)
}
