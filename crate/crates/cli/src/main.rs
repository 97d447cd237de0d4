//! `cdl`: validate scenarios, run the exact analysis and Monte Carlo
//! experiments, and write plot-ready data files.
//!
//! Exit codes: 0 success, 1 domain or acceptance failure, 2 configuration
//! error, 3 I/O error.

mod output;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdl_core::experiment::{
    compare_detectors, dump_trajectory, exact_analysis, fit_exponent, mc_agreement,
    run_monte_carlo, subexponential_factor, ExperimentPlan, ExponentFit,
};
use cdl_core::ldp::{chernoff_information, propagate_moments, DeltaAnalysis, DeltaPoint};
use cdl_core::scenario::{OutputFormat, Scenario, ScenarioConfig};
use cdl_core::{Error, Hypothesis};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use output::{Manifest, OutputDir};

const DELTA_MUS: [f64; 4] = [-1.0, -0.1, 0.1, 1.0];
const DELTA_MAX_K: usize = 500;
const DECAY_MAX_GAP: usize = 200;

#[derive(Parser)]
#[command(
    name = "cdl",
    version,
    about = "Running-consensus distributed detection laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model and network conditions and print a JSON report.
    Validate(Common),
    /// Exact analysis: error curves, decay report, δ(k) diagnostic.
    Analyze(Common),
    /// Monte Carlo simulation compared against the exact curves.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per hypothesis, overriding the config.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
enum Failure {
    Domain(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Config(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Domain(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message());
        return ExitCode::from(f.code());
    }
    let result = match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::Analyze(c) => cmd_analyze(c),
        Command::Simulate(c) => cmd_simulate(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CDL_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Failure::Config(format!("CDL_THREADS={raw:?} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn read_config(path: &Path) -> Result<(String, ScenarioConfig), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| {
        Failure::Config(format!(
            "{}: {}",
            path.display(),
            Failure::from(e).message()
        ))
    })?;
    cfg.name.get_or_insert_with(|| {
        path.file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    });
    Ok((text, cfg))
}

fn apply_overrides(cfg: &mut ScenarioConfig, c: &Common) {
    if let Some(out) = &c.out {
        cfg.output.directory = out.clone();
    }
    if let Some(t) = c.trials {
        cfg.experiment.n_trials = t;
    }
    if let Some(s) = c.seed {
        cfg.experiment.master_seed = s;
    }
}

fn say(quiet: bool, text: String) {
    if !quiet {
        // A closed pipe on stdout is not an error worth reporting.
        let _ = writeln!(std::io::stdout().lock(), "{text}");
    }
}

fn print_json<S: Serialize>(quiet: bool, value: &S) {
    say(
        quiet,
        serde_json::to_string_pretty(value).expect("report serializes"),
    );
}

#[derive(Serialize)]
struct ValidateReport {
    scenario: String,
    passed: bool,
    model: Option<ModelSummary>,
    model_error: Option<ErrorInfo>,
    network: Option<cdl_core::schedule::ValidationReport>,
    network_error: Option<ErrorInfo>,
}

#[derive(Serialize)]
struct ErrorInfo {
    kind: &'static str,
    message: String,
}

impl From<Error> for ErrorInfo {
    fn from(e: Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ModelSummary {
    n_sensors: usize,
    chernoff_information: f64,
    llr_variance: f64,
}

fn cmd_validate(c: &Common) -> Outcome {
    let (_, mut cfg) = read_config(&c.config)?;
    apply_overrides(&mut cfg, c);
    cfg.priors()?;
    cfg.checkpoints()?;
    let (model, model_error) = match cfg.build_model() {
        Ok(m) => (
            Some(ModelSummary {
                n_sensors: m.n_sensors(),
                chernoff_information: chernoff_information(&m),
                llr_variance: m.llr_variance(),
            }),
            None,
        ),
        Err(Error::Config(m)) => return Err(Failure::Config(m)),
        Err(e) => (None, Some(ErrorInfo::from(e))),
    };
    let (network, network_error) = match cfg.assess_schedule() {
        Ok(r) => (Some(r), None),
        Err(Error::Config(m)) => return Err(Failure::Config(m)),
        Err(e) => (None, Some(ErrorInfo::from(e))),
    };
    let passed = model.is_some() && network.as_ref().is_some_and(|r| r.passed);
    let report = ValidateReport {
        scenario: cfg.name.clone().unwrap_or_default(),
        passed,
        model,
        model_error,
        network,
        network_error,
    };
    print_json(c.quiet, &report);
    if !passed {
        let why = report
            .model_error
            .iter()
            .chain(&report.network_error)
            .map(|e| e.kind)
            .next()
            .unwrap_or("schedule conditions not met");
        eprintln!("validation failed: {why}");
    }
    Ok(passed)
}

fn load(c: &Common) -> Result<(String, Scenario), Failure> {
    let (text, mut cfg) = read_config(&c.config)?;
    apply_overrides(&mut cfg, c);
    Ok((text, Scenario::from_config(cfg)?))
}

fn open_output(s: &Scenario) -> Result<OutputDir, Failure> {
    let dir = &s.config.output.directory;
    OutputDir::create(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

fn wants(s: &Scenario, f: OutputFormat) -> bool {
    s.config.output.formats.contains(&f)
}

#[derive(Serialize)]
struct CurveSummary {
    node: String,
    fit: Option<ExponentFit>,
    /// (k, ln F(k)) at the checkpoints.
    log_subexponential_factor: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct AnalysisReport {
    scenario: String,
    n_sensors: usize,
    chernoff_information: f64,
    llr_variance: f64,
    theta: f64,
    beta: f64,
    window: usize,
    w_min: f64,
    period: usize,
    horizon: usize,
    fit_window: (usize, usize),
    curves: Vec<CurveSummary>,
    validation: cdl_core::schedule::ValidationReport,
    delta_bound_violations: usize,
}

fn cmd_analyze(c: &Common) -> Outcome {
    let (text, s) = load(c)?;
    let mut out = open_output(&s)?;
    let horizon = *s.checkpoints.last().expect("checkpoints are non-empty");
    let exact = exact_analysis(&s.model, &s.schedule, s.priors, horizon)?;
    let chernoff = chernoff_information(&s.model);
    let bound = s.schedule.contraction_bound()?;
    let decay = s.schedule.check_geometric_decay(DECAY_MAX_GAP)?;

    let delta_k = horizon.min(DELTA_MAX_K);
    let mut delta_rows: Vec<(&str, DeltaPoint)> = Vec::new();
    for (h, tag) in [(Hypothesis::H0, "H0"), (Hypothesis::H1, "H1")] {
        let da = DeltaAnalysis::new(&s.model, &s.schedule, h)?;
        let traj = propagate_moments(&s.model, &s.schedule, h, delta_k)?;
        for &mu in &DELTA_MUS {
            for node in 0..s.model.n_sensors() {
                for k in 2..=delta_k {
                    delta_rows.push((tag, da.point(&traj, k, mu, node)?));
                }
            }
        }
    }
    let violations = delta_rows
        .iter()
        .filter(|(_, p)| p.delta.abs() > p.bound)
        .count();

    let fit_window = ((horizon / 2).max(1), horizon);
    let curves = std::iter::once(&exact.centralized)
        .chain(&exact.nodes)
        .map(|curve| {
            let at_checkpoints = curve.restrict(&s.checkpoints).expect("dense exact grid");
            Ok(CurveSummary {
                node: curve.node.label(),
                fit: fit_exponent(curve, fit_window).ok(),
                log_subexponential_factor: subexponential_factor(&at_checkpoints, chernoff)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = AnalysisReport {
        scenario: s.name().to_string(),
        n_sensors: s.model.n_sensors(),
        chernoff_information: chernoff,
        llr_variance: s.model.llr_variance(),
        theta: bound.theta,
        beta: bound.beta,
        window: s.schedule.window(),
        w_min: s.schedule.w_min(),
        period: s.schedule.period(),
        horizon,
        fit_window,
        curves,
        validation: s.schedule.validate(),
        delta_bound_violations: violations,
    };

    if wants(&s, OutputFormat::Csv) {
        out.write(
            "exact_curves.csv",
            &output::exact_curves_csv(std::iter::once(&exact.centralized).chain(&exact.nodes)),
        )?;
        out.write("delta_diagnostic.csv", &output::delta_csv(&delta_rows))?;
    }
    if wants(&s, OutputFormat::Json) {
        out.write_json("decay_report.json", &decay)?;
        out.write_json("analysis.json", &report)?;
    }
    out.finish(manifest("analyze", &text, None, None))?;
    say(
        c.quiet,
        format!(
            "{}: C = {chernoff}, B = {}, w_min = {}, θ = {}, β = {}, δ(k) bound violations = {violations}",
            s.name(),
            report.window,
            report.w_min,
            report.theta,
            report.beta
        ),
    );
    Ok(violations == 0)
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    scenario: String,
    n_trials: u64,
    master_seed: u64,
    /// Fewer trials than the configured minimum: intervals are wide and the
    /// agreement verdict is waived.
    wide_intervals: bool,
    max_consensus_deviation: f64,
    agreement: cdl_core::experiment::AgreementReport,
    comparison: &'a cdl_core::experiment::ComparisonReport,
    passed: bool,
}

/// Relative tolerance on the network average matching the centralized
/// statistic.
const CONSENSUS_TOL: f64 = 1e-10;

fn cmd_simulate(c: &Common) -> Outcome {
    let (text, s) = load(c)?;
    let mut out = open_output(&s)?;
    let e = &s.config.experiment;
    let plan = ExperimentPlan::new(
        &s.model,
        &s.schedule,
        s.priors,
        s.checkpoints.clone(),
        e.n_trials,
        e.master_seed,
    )?;
    let mc = run_monte_carlo(&plan)?;
    let comparison = compare_detectors(&plan, &e.thresholds)?;
    let exact = exact_analysis(&s.model, &s.schedule, s.priors, plan.horizon())?;
    let agreement = mc_agreement(&mc, &exact.nodes, &exact.centralized, &e.thresholds);
    let passed = agreement.passed
        && comparison.optimality_verdict == Some(true)
        && mc.max_consensus_deviation <= CONSENSUS_TOL;
    let report = SimulationReport {
        scenario: s.name().to_string(),
        n_trials: e.n_trials,
        master_seed: e.master_seed,
        wide_intervals: agreement.waived,
        max_consensus_deviation: mc.max_consensus_deviation,
        agreement,
        comparison: &comparison,
        passed,
    };

    if wants(&s, OutputFormat::Csv) {
        let exact_at: Vec<_> = std::iter::once(&exact.centralized)
            .chain(&exact.nodes)
            .map(|cv| cv.restrict(&s.checkpoints).expect("dense exact grid"))
            .collect();
        out.write(
            "mc_curves.csv",
            &output::mc_curves_csv(mc.curves().chain(&exact_at)),
        )?;
        for trial in 0..e.trajectory_dumps.min(e.n_trials) {
            for (h, tag) in [(Hypothesis::H0, "h0"), (Hypothesis::H1, "h1")] {
                let bytes = dump_trajectory(
                    &s.model,
                    &s.schedule,
                    h,
                    e.master_seed,
                    trial,
                    plan.horizon(),
                    Vec::new(),
                )?;
                let body = String::from_utf8(bytes).expect("CSV is ASCII");
                out.write(&format!("trajectories/{tag}_trial{trial}.csv"), &body)?;
            }
        }
    }
    if wants(&s, OutputFormat::Json) {
        out.write_json("comparison.json", &report)?;
    }
    out.finish(manifest(
        "simulate",
        &text,
        Some(e.n_trials),
        Some(e.master_seed),
    ))?;
    say(
        c.quiet,
        format!(
            "{}: {} trials, agreement {}/{} cells{}, worst gap/C = {}, consensus deviation = {:e}: {}",
            s.name(),
            e.n_trials,
            report.agreement.cells_within,
            report.agreement.cells_compared,
            if report.wide_intervals { " (waived: too few trials)" } else { "" },
            comparison
                .nodes
                .iter()
                .map(|n| n.gap_at_last)
                .fold(0.0, f64::max)
                / comparison.chernoff_information,
            report.max_consensus_deviation,
            if passed { "PASS" } else { "FAIL" }
        ),
    );
    Ok(passed)
}

fn manifest(
    command: &'static str,
    config_text: &str,
    n_trials: Option<u64>,
    master_seed: Option<u64>,
) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_sha256: output::sha256_hex(config_text.as_bytes()),
        n_trials,
        master_seed,
        files: Vec::new(),
    }
}
