//! Command-line surface of the simulation engine.
//!
//! Frequencies on the command line are linear GHz (the /2pi convention of
//! the device tables), pulse amplitudes are fractions of the flux quantum,
//! times are ns. Every run writes its outputs as CSV plus a `.manifest`
//! sidecar recording the exact command line; replaying that command line
//! reproduces the outputs.

pub mod io;

use clap::{Args, Parser, Subcommand};
use fluxsim::circuit::tunable_exact_levels;
use fluxsim::device::{load_device_spec, DeviceSpec, Subsystem};
use fluxsim::effective::{
    quartic_qubit_frequency, spectrum_deviation, AdjustedSpectrumTable, EffectiveModelOptions,
    ExpansionScope, SpectrumApproximation, fixed_dipole_factor, interaction_strength,
    tunable_dipole_factor,
};
use fluxsim::experiments::{
    build_model_series, chevron_scan, converge_basis, find_transfer_time, gate_run,
    interaction_curve_vs_time, interaction_scaling, leakage_map, transition_search,
    BasisScenario, ChevronScenario, GateScenario, LeakageScenario, Model, RiseFallRule,
    ScalingScenario, SearchScenario, TransitionTarget,
};
use fluxsim::numerics::StateVector;
use fluxsim::operators::StateLabel;
use fluxsim::propagator::{converge_tau, propagate, PropagationPlan};
use fluxsim::pulse::FluxPulse;
use io::{
    duration_scan_csv, manifest_path, scan_csv, trajectory_csv, write_output, RunManifest,
};
use std::f64::consts::TAU;
use std::path::PathBuf;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "fluxsim", version, about = "Flux-tunable transmon simulation engine")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact and effective single-transmon spectra, optionally swept over flux.
    Spectrum(SpectrumArgs),
    /// Propagate one pulse and write the population trajectory.
    Evolve(EvolveArgs),
    /// Populations at the end of the pulse over a (frequency, duration) grid.
    Chevron(ChevronArgs),
    /// Non-adiabatic leakage over a (rise time, amplitude) grid.
    Leakage(LeakageArgs),
    /// Suppressed-transition indicator over a pulse-parameter grid.
    Search(SearchArgs),
    /// Gate-duration calibration sweep with transfer-time detection.
    Gate(GateArgs),
    /// Interaction-strength scaling study (separate amplitude for g).
    Scaling(ScalingArgs),
    /// Time-step and basis-size convergence reports.
    Converge(ConvergeArgs),
    /// Effective interaction strengths along flux or time.
    Couplings(CouplingsArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// circuit | effective-a | effective-b | effective-c | nonadiabatic | adiabatic
    #[arg(long, default_value = "circuit")]
    model: String,
    /// Add the non-adiabatic drive term to composite effective models.
    #[arg(long)]
    drive_term: bool,
    /// Cosine-expansion order for the nonadiabatic single-transmon model.
    #[arg(long, default_value_t = 4)]
    expansion_order: usize,
    /// Keep off-diagonal expansion terms (`full`) or only diagonal (`diag`).
    #[arg(long, default_value = "diag")]
    scope: String,
    /// States kept per subsystem (default: the device file's n_m).
    #[arg(long)]
    nm: Option<usize>,
    /// Time step in ns (default 5e-4 for circuit models, 1e-3 otherwise).
    #[arg(long)]
    tau: Option<f64>,
    /// Halve tau until tracked probabilities are stable to 5e-4.
    #[arg(long)]
    converge_tau: bool,
}

impl ModelArgs {
    fn model(&self) -> Result<Model, String> {
        let scope = match self.scope.as_str() {
            "diag" => ExpansionScope::DiagonalOnly,
            "full" => ExpansionScope::Full,
            other => return Err(format!("unknown scope `{other}`")),
        };
        let with = |mut o: EffectiveModelOptions| {
            o.drive_term = self.drive_term;
            o.expansion_order = self.expansion_order;
            o.scope = scope;
            o
        };
        Ok(match self.model.as_str() {
            "circuit" => Model::Circuit,
            "effective-a" => Model::Effective(with(EffectiveModelOptions::case_a())),
            "effective-b" => Model::Effective(with(EffectiveModelOptions::case_b())),
            "effective-c" => Model::Effective(with(EffectiveModelOptions::case_c())),
            "nonadiabatic" => Model::SingleNonAdiabatic(with(EffectiveModelOptions::default())),
            "adiabatic" => Model::SingleAdiabatic,
            other => return Err(format!("unknown model `{other}`")),
        })
    }

    fn tau(&self) -> f64 {
        self.tau.unwrap_or(if self.model == "circuit" { 5e-4 } else { 1e-3 })
    }

    fn n_m(&self, spec: &DeviceSpec) -> usize {
        self.nm.unwrap_or(spec.n_m)
    }
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    device: PathBuf,
    /// External flux of the pulse target in flux quanta.
    #[arg(long, default_value_t = f64::NAN)]
    phi_over_2pi: f64,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// Sweep range for a deviation table (writes CSV when set).
    #[arg(long)]
    phi_lo: Option<f64>,
    #[arg(long)]
    phi_hi: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    phi_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PulseArgs {
    /// Drive frequency omega_D / 2pi in GHz (0 for unimodal pulses).
    #[arg(long, default_value_t = 0.0)]
    omega_d: f64,
    /// Pulse amplitude delta / 2pi in flux quanta.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Rise and fall time in ns.
    #[arg(long, default_value_t = 13.0)]
    trf: f64,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pulse: PulseArgs,
    /// Pulse duration in ns.
    #[arg(long)]
    td: f64,
    /// Initial product state, highest subsystem first, e.g. 0,0,1.
    #[arg(long, default_value = "0")]
    init: String,
    /// Additional tracked states (repeatable).
    #[arg(long)]
    observe: Vec<String>,
    /// Sampling stride in ns.
    #[arg(long, default_value_t = 0.2)]
    sample_dt: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChevronArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    omega_lo: f64,
    #[arg(long)]
    omega_hi: f64,
    #[arg(long)]
    omega_step: f64,
    #[arg(long)]
    td_lo: f64,
    #[arg(long)]
    td_hi: f64,
    #[arg(long)]
    td_step: f64,
    /// Fixed rise/fall time; omit for T_rf = T_d / 2.
    #[arg(long)]
    trf: Option<f64>,
    #[arg(long, default_value = "0")]
    init: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LeakageArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Initial level m; the map reports 1 - p^(m).
    #[arg(long, default_value_t = 0)]
    level: usize,
    #[arg(long)]
    trf_lo: f64,
    #[arg(long)]
    trf_hi: f64,
    #[arg(long, default_value_t = 15)]
    trf_points: usize,
    #[arg(long)]
    delta_lo: f64,
    #[arg(long)]
    delta_hi: f64,
    #[arg(long, default_value_t = 15)]
    delta_points: usize,
    #[arg(long, default_value_t = 50.0)]
    td: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    omega_lo: f64,
    #[arg(long)]
    omega_hi: f64,
    #[arg(long, default_value_t = 1e-3)]
    omega_step: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_lo: f64,
    #[arg(long)]
    delta_hi: f64,
    #[arg(long, default_value_t = 5e-3)]
    delta_step: f64,
    #[arg(long, default_value_t = 300.0)]
    tmax: f64,
    #[arg(long, default_value_t = 13.0)]
    trf: f64,
    #[arg(long, default_value = "0,0,0")]
    init: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// iswap | cz | custom (with --init/--observe)
    #[arg(long, default_value = "iswap")]
    target: String,
    #[command(flatten)]
    pulse: PulseArgs,
    #[arg(long)]
    td_lo: f64,
    #[arg(long)]
    td_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    td_step: f64,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    observe: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    device: PathBuf,
    #[arg(long)]
    omega_d: f64,
    #[arg(long)]
    delta: f64,
    /// Comma-separated delta* values in flux quanta.
    #[arg(long)]
    delta_star: String,
    #[arg(long, default_value_t = 13.0)]
    trf: f64,
    #[arg(long, default_value_t = 300.0)]
    td: f64,
    #[arg(long, default_value = "iswap")]
    target: String,
    #[arg(long, default_value_t = 4)]
    nm: usize,
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    device: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pulse: PulseArgs,
    #[arg(long)]
    td: f64,
    #[arg(long, default_value = "0")]
    init: String,
    #[arg(long)]
    observe: Vec<String>,
    /// Comma-separated ascending basis sizes, e.g. 3,6,7.
    #[arg(long)]
    nm_list: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CouplingsArgs {
    #[arg(long)]
    device: PathBuf,
    /// Coupling index in the device file.
    #[arg(long, default_value_t = 0)]
    coupling: usize,
    #[command(flatten)]
    pulse: PulseArgs,
    /// Pulse duration for the time curve; omit for a flux sweep.
    #[arg(long)]
    td: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    phi_lo: f64,
    #[arg(long, default_value_t = 0.5)]
    phi_hi: f64,
    #[arg(long, default_value_t = 0.002)]
    phi_step: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_label(text: &str) -> Result<StateLabel, String> {
    let values: Result<Vec<usize>, _> = text
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect();
    values.map(StateLabel).map_err(|_| format!("cannot parse state label `{text}`"))
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}

fn gate_target(spec: &DeviceSpec, name: &str) -> Result<TransitionTarget, String> {
    if spec.subsystems.len() != 3 {
        return Err("iswap/cz targets assume a three-subsystem device".into());
    }
    let coupler_is_resonator = matches!(spec.subsystems[2], Subsystem::Resonator { .. });
    match name {
        "iswap" => Ok(TransitionTarget::new(
            StateLabel(vec![0, 0, 1]),
            vec![StateLabel(vec![0, 0, 1]), StateLabel(vec![0, 1, 0])],
        )),
        "cz" => {
            let partner =
                if coupler_is_resonator { StateLabel(vec![0, 0, 2]) } else { StateLabel(vec![0, 2, 0]) };
            Ok(TransitionTarget::new(
                StateLabel(vec![0, 1, 1]),
                vec![StateLabel(vec![0, 1, 1]), partner],
            ))
        }
        other => Err(format!("unknown target `{other}` (use iswap, cz, or --init/--observe)")),
    }
}

/// Entry point shared by the binary and the replay tests.
pub fn run(args: &[String]) -> Result<(), String> {
    let cli = Cli::try_parse_from(args).map_err(|e| e.to_string())?;
    let argv = args.to_vec();
    match cli.command {
        Command::Spectrum(a) => run_spectrum(a, argv),
        Command::Evolve(a) => run_evolve(a, argv),
        Command::Chevron(a) => run_chevron(a, argv),
        Command::Leakage(a) => run_leakage(a, argv),
        Command::Search(a) => run_search(a, argv),
        Command::Gate(a) => run_gate(a, argv),
        Command::Scaling(a) => run_scaling(a, argv),
        Command::Converge(a) => run_converge(a, argv),
        Command::Couplings(a) => run_couplings(a, argv),
    }
}

fn load(device: &PathBuf) -> Result<DeviceSpec, String> {
    load_device_spec(device).map_err(|e| e.to_string())
}

fn target_params(
    spec: &DeviceSpec,
) -> Result<fluxsim::device::TunableTransmonParams, String> {
    match &spec.subsystems[spec.pulse_target] {
        Subsystem::Tunable { params, .. } => Ok(*params),
        _ => Err("pulse target is not a tunable transmon".into()),
    }
}

fn run_spectrum(a: SpectrumArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let p = target_params(&spec)?;
    let phi0 = spec.pulse_target_phi0().unwrap_or(0.0);
    let phi = if a.phi_over_2pi.is_nan() { phi0 } else { TAU * a.phi_over_2pi };
    let exact =
        tunable_exact_levels(&p, phi, spec.n_c, a.levels).map_err(|e| e.to_string())?;
    println!("external flux phi/2pi = {}", phi / TAU);
    for (m, e) in exact.iter().enumerate() {
        println!("exact E{m} - E0 = {:.6} GHz", e / TAU);
    }
    println!("quartic qubit frequency = {:.6} GHz", quartic_qubit_frequency(phi, &p) / TAU);
    if let (Some(lo), Some(hi), Some(out)) = (a.phi_lo, a.phi_hi, a.out.as_ref()) {
        let table = AdjustedSpectrumTable::build(&p, TAU * lo, TAU * hi, 0.001 * TAU, spec.n_c)
            .map_err(|e| e.to_string())?;
        let mut csv = String::from(
            "phi_over_2pi,omega_exact_ghz_over_2pi,alpha_exact_ghz_over_2pi,dev1_plain_ghz,dev2_plain_ghz,dev1_adjusted_ghz,dev2_adjusted_ghz\n",
        );
        let mut phi_v = TAU * lo;
        while phi_v <= TAU * hi + 1e-12 {
            let levels =
                tunable_exact_levels(&p, phi_v, spec.n_c, 3).map_err(|e| e.to_string())?;
            let dev = |m: usize, approx| {
                spectrum_deviation(m, phi_v, approx, &p, Some(&table), None, spec.n_c)
                    .map_err(|e| e.to_string())
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                phi_v / TAU,
                levels[1] / TAU,
                (levels[2] - 2.0 * levels[1]) / TAU,
                dev(1, SpectrumApproximation::PlainQuartic)? / TAU,
                dev(2, SpectrumApproximation::PlainQuartic)? / TAU,
                dev(1, SpectrumApproximation::Adjusted)? / TAU,
                dev(2, SpectrumApproximation::Adjusted)? / TAU,
            ));
            phi_v += TAU * a.phi_step;
        }
        write_output(out, &csv).map_err(|e| e.to_string())?;
        let manifest = RunManifest {
            tool_version: VERSION,
            device_digest: spec.digest(),
            model: "spectrum".into(),
            parameters: vec![("n_c".into(), spec.n_c.to_string())],
            command_line: argv,
        };
        write_output(&manifest_path(out), &manifest.render()).map_err(|e| e.to_string())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_evolve(a: EvolveArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let n_m = a.model.n_m(&spec);
    let phi0 = spec.pulse_target_phi0().ok_or("no tunable pulse target")?;
    let pulse = if a.pulse.delta > 0.0 {
        FluxPulse::new(phi0, TAU * a.pulse.delta, TAU * a.pulse.omega_d, a.pulse.trf, a.td)
            .map_err(|e| e.to_string())?
    } else {
        FluxPulse::constant(phi0, a.td)
    };
    let series = build_model_series(&spec, &pulse, &model, n_m).map_err(|e| e.to_string())?;
    let init = parse_label(&a.init)?;
    let mut observables = vec![init.clone()];
    for o in &a.observe {
        let label = parse_label(o)?;
        if !observables.contains(&label) {
            observables.push(label);
        }
    }
    let shape = series.shape().clone();
    let obs_idx: Vec<usize> = observables.iter().map(|l| l.flat_index(&shape)).collect();
    let mut tau = a.model.tau();
    let plan = PropagationPlan::new(series, tau, 0.0, a.td, a.sample_dt, obs_idx, false)
        .map_err(|e| e.to_string())?;
    let psi0 = StateVector::basis_state(plan.dim(), init.flat_index(&shape));
    let traj = if a.model.converge_tau {
        let (report, traj) = converge_tau(&plan, &psi0, 5e-4).map_err(|e| e.to_string())?;
        tau = report.tau_star;
        traj
    } else {
        propagate(&plan, &psi0).map_err(|e| e.to_string())?
    };
    write_output(&a.out, &trajectory_csv(&traj)).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: model.name(),
        parameters: vec![
            ("omega_d_ghz_over_2pi".into(), a.pulse.omega_d.to_string()),
            ("delta_over_2pi".into(), a.pulse.delta.to_string()),
            ("t_rf_ns".into(), a.pulse.trf.to_string()),
            ("t_d_ns".into(), a.td.to_string()),
            ("tau_ns".into(), tau.to_string()),
            ("n_m".into(), n_m.to_string()),
            ("n_c".into(), spec.n_c.to_string()),
        ],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_chevron(a: ChevronArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let init = parse_label(&a.init)?;
    let scenario = ChevronScenario {
        model: model.clone(),
        n_m: a.model.n_m(&spec),
        delta: TAU * a.delta,
        t_rf: match a.trf {
            Some(v) => RiseFallRule::Fixed(v),
            None => RiseFallRule::HalfDuration,
        },
        omega_d_grid: grid(TAU * a.omega_lo, TAU * a.omega_hi, TAU * a.omega_step),
        t_d_grid: grid(a.td_lo, a.td_hi, a.td_step),
        target: TransitionTarget::new(init, vec![]),
        tau: a.model.tau(),
    };
    let scan = chevron_scan(&spec, &scenario).map_err(|e| e.to_string())?;
    write_output(&a.out, &scan_csv(&scan)).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: model.name(),
        parameters: vec![
            ("delta_over_2pi".into(), a.delta.to_string()),
            ("tau_ns".into(), scenario.tau.to_string()),
            ("n_m".into(), scenario.n_m.to_string()),
        ],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {} ({} rows)", a.out.display(), scan.rows.len());
    Ok(())
}

fn run_leakage(a: LeakageArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let scenario = LeakageScenario {
        model: model.clone(),
        n_m: a.model.n_m(&spec),
        level: a.level,
        t_rf_grid: linspace(a.trf_lo, a.trf_hi, a.trf_points),
        delta_grid: linspace(TAU * a.delta_lo, TAU * a.delta_hi, a.delta_points),
        t_d: a.td,
        tau: a.model.tau(),
    };
    let scan = leakage_map(&spec, &scenario).map_err(|e| e.to_string())?;
    write_output(&a.out, &scan_csv(&scan)).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: model.name(),
        parameters: vec![
            ("level".into(), a.level.to_string()),
            ("t_d_ns".into(), a.td.to_string()),
            ("tau_ns".into(), scenario.tau.to_string()),
            ("n_m".into(), scenario.n_m.to_string()),
        ],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_search(a: SearchArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let scenario = SearchScenario {
        model: model.clone(),
        n_m: a.model.n_m(&spec),
        omega_d_grid: grid(TAU * a.omega_lo, TAU * a.omega_hi, TAU * a.omega_step),
        delta_grid: grid(TAU * a.delta_lo, TAU * a.delta_hi, TAU * a.delta_step),
        t_max: a.tmax,
        t_rf: a.trf,
        sample_dt: 0.2,
        initial: parse_label(&a.init)?,
        tau: a.model.tau(),
    };
    let outcome = transition_search(&spec, &scenario).map_err(|e| e.to_string())?;
    println!(
        "epsilon = {:.6} at omega_d = {:.4} GHz, delta = {:.4}, t = {:.1} ns ({} grid points)",
        outcome.epsilon,
        outcome.argmin_omega_d / TAU,
        outcome.argmin_delta / TAU,
        outcome.argmin_t,
        outcome.grid_points
    );
    if let Some(out) = a.out {
        let csv = format!(
            "epsilon,argmin_omega_d_ghz_over_2pi,argmin_delta_over_2pi,argmin_t_ns,grid_points\n{},{},{},{},{}\n",
            outcome.epsilon,
            outcome.argmin_omega_d / TAU,
            outcome.argmin_delta / TAU,
            outcome.argmin_t,
            outcome.grid_points
        );
        write_output(&out, &csv).map_err(|e| e.to_string())?;
        let manifest = RunManifest {
            tool_version: VERSION,
            device_digest: spec.digest(),
            model: model.name(),
            parameters: vec![
                ("t_max_ns".into(), a.tmax.to_string()),
                ("tau_ns".into(), scenario.tau.to_string()),
                ("n_m".into(), scenario.n_m.to_string()),
            ],
            command_line: argv,
        };
        write_output(&manifest_path(&out), &manifest.render()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_gate(a: GateArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let target = match (&a.init, a.target.as_str()) {
        (Some(init), _) => {
            let initial = parse_label(init)?;
            let mut observables = vec![initial.clone()];
            for o in &a.observe {
                observables.push(parse_label(o)?);
            }
            TransitionTarget::new(initial, observables)
        }
        (None, name) => gate_target(&spec, name)?,
    };
    // case A always freezes g at the flux offset; print both conventions so
    // the published-table ambiguity stays visible
    if let Subsystem::Tunable { params, phi0, .. } = &spec.subsystems[spec.pulse_target] {
        for cpl in &spec.couplings {
            if cpl.i != spec.pulse_target && cpl.j != spec.pulse_target {
                continue;
            }
            let other = if cpl.i == spec.pulse_target { cpl.j } else { cpl.i };
            let partner = match &spec.subsystems[other] {
                Subsystem::Fixed { params, .. } => fixed_dipole_factor(params),
                Subsystem::Tunable { params, phi0, .. } => tunable_dipole_factor(params, *phi0),
                Subsystem::Resonator { .. } => 1.0,
            };
            println!(
                "coupling {}-{}: g(phi0)/2pi = {:.4} GHz, g(0)/2pi = {:.4} GHz",
                cpl.i,
                cpl.j,
                interaction_strength(cpl.g, tunable_dipole_factor(params, *phi0), partner) / TAU,
                interaction_strength(cpl.g, tunable_dipole_factor(params, 0.0), partner) / TAU,
            );
        }
    }
    let mut tau = a.model.tau();
    if a.model.converge_tau {
        let phi0 = spec.pulse_target_phi0().ok_or("no tunable pulse target")?;
        let t_probe = a.td_hi;
        let pulse = FluxPulse::new(phi0, TAU * a.pulse.delta, TAU * a.pulse.omega_d, a.pulse.trf, t_probe)
            .map_err(|e| e.to_string())?;
        tau = fluxsim::experiments::pilot_tau(
            &spec,
            &pulse,
            &model,
            a.model.n_m(&spec),
            &target.initial,
            t_probe.min(120.0),
            tau * 4.0,
            5e-4,
        )
        .map_err(|e| e.to_string())?;
        println!("converged tau* = {tau} ns");
    }
    let scenario = GateScenario {
        model: model.clone(),
        n_m: a.model.n_m(&spec),
        omega_d: TAU * a.pulse.omega_d,
        delta: TAU * a.pulse.delta,
        t_rf: a.pulse.trf,
        t_d_grid: grid(a.td_lo, a.td_hi, a.td_step),
        target,
        tau,
    };
    let scan = gate_run(&spec, &scenario).map_err(|e| e.to_string())?;
    match find_transfer_time(&scan, 0.5) {
        Ok(t) => println!("transfer time T_d = {t:.2} ns"),
        Err(e) => println!("transfer time not found: {e}"),
    }
    write_output(&a.out, &duration_scan_csv(&scan)).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: model.name(),
        parameters: vec![
            ("target".into(), a.target.clone()),
            ("omega_d_ghz_over_2pi".into(), a.pulse.omega_d.to_string()),
            ("delta_over_2pi".into(), a.pulse.delta.to_string()),
            ("t_rf_ns".into(), a.pulse.trf.to_string()),
            ("tau_ns".into(), tau.to_string()),
            ("n_m".into(), scenario.n_m.to_string()),
            ("n_c".into(), spec.n_c.to_string()),
        ],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_scaling(a: ScalingArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let delta_star_grid: Result<Vec<f64>, _> =
        a.delta_star.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let delta_star_grid: Vec<f64> =
        delta_star_grid.map_err(|_| "bad --delta-star list")?.iter().map(|v| TAU * v).collect();
    let target = gate_target(&spec, &a.target)?;
    let scenario = ScalingScenario {
        n_m: a.nm,
        omega_d: TAU * a.omega_d,
        delta: TAU * a.delta,
        delta_star_grid,
        t_rf: a.trf,
        t_d: a.td,
        target,
        tau: a.tau,
    };
    let runs = interaction_scaling(&spec, &scenario).map_err(|e| e.to_string())?;
    let mut csv = String::from("delta_star_over_2pi,first_min_ns\n");
    for run in &runs {
        csv.push_str(&format!(
            "{},{}\n",
            run.delta_star / TAU,
            run.first_min_t.map(|t| t.to_string()).unwrap_or_else(|| "nan".into())
        ));
        println!(
            "delta*/2pi = {:.3}: first minimum at {:?} ns",
            run.delta_star / TAU,
            run.first_min_t
        );
    }
    write_output(&a.out, &csv).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: "effective scaling".into(),
        parameters: vec![
            ("omega_d_ghz_over_2pi".into(), a.omega_d.to_string()),
            ("delta_over_2pi".into(), a.delta.to_string()),
            ("t_d_ns".into(), a.td.to_string()),
            ("tau_ns".into(), a.tau.to_string()),
        ],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_converge(a: ConvergeArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let model = a.model.model()?;
    let phi0 = spec.pulse_target_phi0().ok_or("no tunable pulse target")?;
    let pulse = if a.pulse.delta > 0.0 {
        FluxPulse::new(phi0, TAU * a.pulse.delta, TAU * a.pulse.omega_d, a.pulse.trf, a.td)
            .map_err(|e| e.to_string())?
    } else {
        FluxPulse::constant(phi0, a.td)
    };
    let init = parse_label(&a.init)?;
    let mut observables = vec![init.clone()];
    for o in &a.observe {
        observables.push(parse_label(o)?);
    }
    let target = TransitionTarget::new(init.clone(), observables);
    let mut lines = Vec::new();
    // time-step convergence at the base basis size
    let n_m = a.model.n_m(&spec);
    let series = build_model_series(&spec, &pulse, &model, n_m).map_err(|e| e.to_string())?;
    let shape = series.shape().clone();
    let obs_idx: Vec<usize> =
        target.observables.iter().map(|l| l.flat_index(&shape)).collect();
    let plan = PropagationPlan::new(series, a.model.tau() * 4.0, 0.0, a.td, 0.2, obs_idx, false)
        .map_err(|e| e.to_string())?;
    let psi0 = StateVector::basis_state(plan.dim(), init.flat_index(&shape));
    let (report, _) = converge_tau(&plan, &psi0, 5e-4).map_err(|e| e.to_string())?;
    lines.push(format!(
        "tau* = {} ns after {} halvings (last deviation {:.2e})",
        report.tau_star, report.halvings, report.deviation
    ));
    if let Some(list) = &a.nm_list {
        let n_m_list: Result<Vec<usize>, _> =
            list.split(',').map(|v| v.trim().parse::<usize>()).collect();
        let n_m_list = n_m_list.map_err(|_| "bad --nm-list")?;
        let scenario = BasisScenario {
            model: model.clone(),
            pulse: pulse.clone(),
            target,
            t_end: a.td,
            sample_dt: 0.2,
            tau: report.tau_star,
        };
        let conv = converge_basis(&spec, &scenario, &n_m_list).map_err(|e| e.to_string())?;
        for (pair, dev) in conv.n_m.windows(2).zip(&conv.deviations) {
            lines.push(format!("N_m {} vs {}: max probability deviation {:.3e}", pair[0], pair[1], dev));
        }
    }
    for line in &lines {
        println!("{line}");
    }
    if let Some(out) = a.out {
        write_output(&out, &(lines.join("\n") + "\n")).map_err(|e| e.to_string())?;
        let manifest = RunManifest {
            tool_version: VERSION,
            device_digest: spec.digest(),
            model: model.name(),
            parameters: vec![("t_d_ns".into(), a.td.to_string())],
            command_line: argv,
        };
        write_output(&manifest_path(&out), &manifest.render()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn run_couplings(a: CouplingsArgs, argv: Vec<String>) -> Result<(), String> {
    let spec = load(&a.device)?;
    let cpl = *spec
        .couplings
        .get(a.coupling)
        .ok_or_else(|| format!("device has no coupling {}", a.coupling))?;
    // the tunable end follows the flux; the partner contributes a constant
    let (tun_site, other) = match (&spec.subsystems[cpl.i], &spec.subsystems[cpl.j]) {
        (Subsystem::Tunable { .. }, _) => (cpl.i, cpl.j),
        (_, Subsystem::Tunable { .. }) => (cpl.j, cpl.i),
        _ => return Err("coupling has no tunable transmon end".into()),
    };
    let tun = match &spec.subsystems[tun_site] {
        Subsystem::Tunable { params, .. } => *params,
        _ => unreachable!(),
    };
    let static_factor = match &spec.subsystems[other] {
        Subsystem::Fixed { params, .. } => fixed_dipole_factor(params),
        Subsystem::Tunable { params, phi0, .. } => tunable_dipole_factor(params, *phi0),
        Subsystem::Resonator { .. } => 1.0,
    };
    let mut csv = String::new();
    match a.td {
        Some(td) => {
            let phi0 = match &spec.subsystems[tun_site] {
                Subsystem::Tunable { phi0, .. } => *phi0,
                _ => unreachable!(),
            };
            let pulse =
                FluxPulse::new(phi0, TAU * a.pulse.delta, TAU * a.pulse.omega_d, a.pulse.trf, td)
                    .map_err(|e| e.to_string())?;
            csv.push_str("t_ns,g_ghz_over_2pi\n");
            for (t, g) in
                interaction_curve_vs_time(cpl.g, static_factor, &tun, &pulse, 0.1)
            {
                csv.push_str(&format!("{},{}\n", t, g / TAU));
            }
        }
        None => {
            csv.push_str("phi_over_2pi,g_ghz_over_2pi\n");
            let phis = grid(TAU * a.phi_lo, TAU * a.phi_hi, TAU * a.phi_step);
            for (phi, g) in
                fluxsim::experiments::interaction_curve_vs_flux(cpl.g, static_factor, &tun, &phis)
            {
                csv.push_str(&format!("{},{}\n", phi / TAU, g / TAU));
            }
        }
    }
    write_output(&a.out, &csv).map_err(|e| e.to_string())?;
    let manifest = RunManifest {
        tool_version: VERSION,
        device_digest: spec.digest(),
        model: "interaction curves".into(),
        parameters: vec![("coupling".into(), a.coupling.to_string())],
        command_line: argv,
    };
    write_output(&manifest_path(&a.out), &manifest.render()).map_err(|e| e.to_string())?;
    println!("wrote {}", a.out.display());
    Ok(())
}
