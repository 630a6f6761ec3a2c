//! Command-line front end: configuration loading, experiment commands and
//! artifact emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ris_mimo::config::{AntennaKind, ExperimentConfig};
use ris_mimo::harness::{
    aggregate, optimize_demo, run_experiment, validate_lb, write_results_csv, write_summary_json, write_trace_csv,
    with_workers, LbCheck, RunInfo, Scenario, Summary, TrialRecord,
};
use ris_mimo::Error;

/// Exit code for malformed or inconsistent configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures during a run.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit code for filesystem failures.
pub const EXIT_IO: i32 = 4;
/// Exit code of `validate-lb` when a term disagrees with its simulation.
pub const EXIT_VALIDATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "ris-mimo", version, about = "RIS-aided massive MIMO simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte-Carlo experiment and write results.csv and summary.json.
    Simulate(SimulateArgs),
    /// Compare the closed-form lower-bound terms with simulation.
    ValidateLb(ValidateArgs),
    /// Run coordinate-descent phase optimization on a single drop and write objective_trace.csv.
    OptimizeDemo(DemoArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Configuration override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads; does not change the results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Number of UE drops.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Fading draws per drop.
    #[arg(long)]
    pub draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads; does not change the results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Monte-Carlo realizations.
    #[arg(long, default_value_t = 200_000)]
    pub draws: usize,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// Largest accepted deviation in Monte-Carlo standard errors.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AntennaArg {
    Omni,
    Directional,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = AntennaArg::Directional)]
    pub antenna: AntennaArg,
}

/// Errors surfaced to the user, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Run(Error),
    Validation(usize),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_config() => EXIT_CONFIG,
            CliError::Run(Error::Io(_)) => EXIT_IO,
            CliError::Run(Error::Trial { source, .. }) if matches!(**source, Error::Io(_)) => EXIT_IO,
            CliError::Run(_) => EXIT_NUMERIC,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Run(e) => {
                write!(f, "{e}")?;
                let mut src = std::error::Error::source(e);
                while let Some(s) = src {
                    write!(f, ": {s}")?;
                    src = s.source();
                }
                Ok(())
            }
            CliError::Validation(n) => write!(f, "{n} lower-bound term(s) outside tolerance"),
        }
    }
}

/// Provenance of a run, written before any result file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub resolved_config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub status: &'static str,
    /// `(file name, SHA-256)` of every artifact.
    pub artifacts: Vec<(String, String)>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut f = BufWriter::new(fs::File::create(dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::Numeric(e.to_string()))?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Loads the configuration and applies overrides; the effective seed is
/// written back into the resolved configuration.
pub fn load_config(common: &CommonArgs, extra: &[String]) -> Result<(ExperimentConfig, u64), CliError> {
    let mut overrides = common.set.clone();
    overrides.extend_from_slice(extra);
    if let Some(seed) = common.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    let config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml_with_overrides(&text, &overrides)?
        }
        None => ExperimentConfig::from_toml_with_overrides("", &overrides)?,
    };
    let seed = config.experiment.seed;
    Ok((config, seed))
}

fn manifest(command: &str, common: &CommonArgs, config: &ExperimentConfig, seed: u64, workers: Option<usize>) -> RunManifest {
    RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_path: common.config.clone(),
        resolved_config: config.clone(),
        seed,
        out_dir: common.out.clone(),
        workers,
        status: "running",
        artifacts: Vec::new(),
    }
}

fn finish_manifest(mut m: RunManifest, files: &[&str]) -> Result<(), CliError> {
    for name in files {
        let path = m.out_dir.join(name);
        m.artifacts.push((name.to_string(), sha256_file(&path)?));
    }
    m.status = "complete";
    let dir = m.out_dir.clone();
    m.write(&dir)
}

/// Output of `simulate`.
#[derive(Debug)]
pub struct SimulationOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
    pub results_sha256: String,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationOutput, CliError> {
    let mut extra = Vec::new();
    if let Some(t) = args.trials {
        extra.push(format!("experiment.trials={t}"));
    }
    if let Some(d) = args.draws {
        extra.push(format!("experiment.draws={d}"));
    }
    let (config, seed) = load_config(&args.common, &extra)?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let m = manifest("simulate", &args.common, &config, seed, args.workers);
    m.write(out)?;

    let start = Instant::now();
    let scenario = Scenario::new(config.clone(), seed)?;
    for a in &scenario.arrays {
        log::info!("{} array: truncation rank q = {}", a.kind.name(), a.rank());
    }
    let records = run_experiment(&scenario, args.workers)?;
    let summary = aggregate(&records)?;
    let runtime_s = start.elapsed().as_secs_f64();

    let results_path = out.join("results.csv");
    let mut f = BufWriter::new(fs::File::create(&results_path)?);
    write_results_csv(&records, &mut f)?;
    f.flush()?;
    drop(f);

    let info = RunInfo {
        seed,
        runtime_s,
        noise_power_w: config.noise_power_w(),
        p_max_w: config.p_max_w(),
        prelog_icsi: config.prelog_icsi(),
        training_configs: config.training_configs(),
        ranks: scenario.arrays.iter().map(|a| (a.kind, a.rank())).collect(),
    };
    let mut f = BufWriter::new(fs::File::create(out.join("summary.json"))?);
    write_summary_json(&config, &info, &summary, &records, &mut f)?;
    f.flush()?;
    drop(f);

    finish_manifest(m, &["results.csv", "summary.json"])?;
    Ok(SimulationOutput {
        results_sha256: sha256_file(&results_path)?,
        records,
        summary,
    })
}

pub fn cmd_validate_lb(args: &ValidateArgs) -> Result<Vec<LbCheck>, CliError> {
    let (config, seed) = load_config(&args.common, &[])?;
    let scenario = Scenario::new(config, seed)?;
    let checks = match args.workers {
        Some(n) => with_workers(n, || validate_lb(&scenario, args.draws))??,
        None => validate_lb(&scenario, args.draws)?,
    };
    Ok(checks)
}

pub fn check_passes(c: &LbCheck, tolerance: f64, sigmas: f64) -> bool {
    c.relative_error() <= tolerance && c.sigmas() <= sigmas
}

pub fn cmd_optimize_demo(args: &DemoArgs) -> Result<Vec<(ris_mimo::optimizer::Objective, ris_mimo::optimizer::OptimizationResult)>, CliError> {
    let (config, seed) = load_config(&args.common, &[])?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    let m = manifest("optimize-demo", &args.common, &config, seed, None);
    m.write(out)?;
    let kind = match args.antenna {
        AntennaArg::Omni => AntennaKind::Omni,
        AntennaArg::Directional => AntennaKind::Directional,
    };
    let mut config = config;
    if !config.experiment.antennas.contains(&kind) {
        config.experiment.antennas.push(kind);
    }
    let scenario = Scenario::new(config, seed)?;
    let runs = optimize_demo(&scenario, kind)?;
    let mut f = BufWriter::new(fs::File::create(out.join("objective_trace.csv"))?);
    write_trace_csv(&runs, &mut f)?;
    f.flush()?;
    drop(f);
    finish_manifest(m, &["objective_trace.csv"])?;
    Ok(runs)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let out = cmd_simulate(args)?;
            println!("{:<28} {:>8} {:>8} {:>8} {:>8}", "mode", "p5", "median", "mean", "p95");
            for m in &out.summary.modes {
                println!(
                    "{:<28} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                    m.mode.to_string(),
                    m.p5,
                    m.median,
                    m.mean,
                    m.p95
                );
            }
            println!("results.csv sha256 {}", out.results_sha256);
            Ok(())
        }
        Command::ValidateLb(args) => {
            let checks = cmd_validate_lb(args)?;
            println!(
                "{:<5} {:<8} {:>14} {:>14} {:>9} {:>7}  status",
                "user", "term", "closed form", "monte carlo", "rel err", "sigmas"
            );
            let mut failed = 0;
            for c in &checks {
                let ok = check_passes(c, args.tolerance, args.sigmas);
                failed += usize::from(!ok);
                println!(
                    "{:<5} {:<8} {:>14.6e} {:>14.6e} {:>9.2e} {:>7.2}  {}",
                    c.user,
                    c.term,
                    c.closed_form,
                    c.monte_carlo,
                    c.relative_error(),
                    c.sigmas(),
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed > 0 {
                Err(CliError::Validation(failed))
            } else {
                Ok(())
            }
        }
        Command::OptimizeDemo(args) => {
            let runs = cmd_optimize_demo(args)?;
            for (obj, r) in &runs {
                println!(
                    "{obj}: {:.6e} -> {:.6e} in {} sweep(s){}",
                    r.initial_value,
                    r.final_value,
                    r.sweeps,
                    if r.converged { "" } else { " (sweep limit)" }
                );
            }
            Ok(())
        }
    }
}
