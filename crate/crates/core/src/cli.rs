//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or a failed
//! certificate, 3 numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channel::ChannelPoint;
use crate::dominance::{self, CertReport, DominanceCheck, DominanceWeights};
use crate::error::{Error, Result};
use crate::finite_key::{self, KeyRateResult, PointEvaluation};
use crate::montecarlo::{self, SamplingModel, SimTally};
use crate::optimize::{self, OptimizationProblem, OptimizationResult, Sweep};
use crate::params::{ConfigFile, ExperimentConfig, LogBase, ProtocolParams, Variant};
use crate::photon::{self, DecoyCoefficients};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tfqkd",
    version,
    about = "Finite-key rates for twin-field QKD with decoy-mode phase postselection"
)]
pub struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true, env = "TFQKD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate of one parameter tuple at one distance.
    Rate(RateArgs),
    /// Optimised key rate at one distance.
    Optimize(OptimizeArgs),
    /// Optimised rate-distance curve as CSV.
    Curve(CurveArgs),
    /// Numerical certificate of operator dominance for Γ and Λ.
    VerifyDominance(VerifyArgs),
    /// Round-by-round Monte Carlo run.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    TwoPhase,
    FourPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogBaseArg {
    #[value(name = "e")]
    E,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    PaperFaithful,
    Physical,
}

/// Experiment settings shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Total number of rounds N.
    #[arg(long)]
    pub n_tot: Option<f64>,
    /// Logarithm in the concentration bounds.
    #[arg(long, value_enum)]
    pub log_base: Option<LogBaseArg>,
}

/// Protocol tuple given inline or through a TOML file.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// TOML file holding mu, mu1, mu2, p0, p10, p11, p2, delta_over_pi.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub p10: Option<f64>,
    #[arg(long)]
    pub p11: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub delta_over_pi: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Distance in km (else `distance_km` from the config).
    #[arg(long)]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Objective evaluations per restart.
    #[arg(long, default_value_t = optimize::DEFAULT_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = optimize::DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub distance: Option<f64>,
    /// Also write the JSON result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 500.0)]
    pub to: f64,
    #[arg(long, default_value_t = 10.0)]
    pub step: f64,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full per-point records as a JSON array.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Optimise every distance independently.
    #[arg(long)]
    pub cold: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = dominance::DEFAULT_N_MAX)]
    pub n_max: u32,
    #[arg(long, default_value_t = dominance::DEFAULT_DELTA_GRID)]
    pub grid: u32,
    #[arg(long, default_value_t = dominance::DEFAULT_TOL)]
    pub tol: f64,
    /// Test this Λ instead of the series value.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Multiply the tested Λ by this factor.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub rounds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModelArg::PaperFaithful)]
    pub model: ModelArg,
    #[arg(long)]
    pub distance: Option<f64>,
    /// Binary round trace (28-byte little-endian records).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Feed the simulated counts through the finite-key analysis.
    #[arg(long)]
    pub evaluate: bool,
}

/// Provenance attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration as JSON.
    pub config_digest: String,
    pub tool_version: String,
    pub seed: u64,
    /// Unix time in seconds.
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    fn start<T: Serialize>(command: &str, resolved: &T, seed: u64) -> Result<Self> {
        let json = serde_json::to_vec(resolved).map_err(|e| Error::Config(e.to_string()))?;
        let digest = Sha256::digest(&json);
        Ok(RunManifest {
            command: command.to_string(),
            config_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started: unix_now(),
            finished: 0,
            outputs: Vec::new(),
        })
    }

    fn finish(mut self, outputs: &[&Path]) -> Self {
        self.finished = unix_now();
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self
    }
}

fn resolve_experiment(args: &ExperimentArgs) -> Result<(ConfigFile, ExperimentConfig)> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut cfg = file.experiment()?;
    if let Some(v) = args.variant {
        cfg.variant = match v {
            VariantArg::TwoPhase => Variant::TwoPhase,
            VariantArg::FourPhase => Variant::FourPhase,
        };
    }
    if let Some(n) = args.n_tot {
        cfg.n_tot = n;
    }
    if let Some(b) = args.log_base {
        cfg.log_base = match b {
            LogBaseArg::E => LogBase::Natural,
            LogBaseArg::Two => LogBase::Two,
        };
    }
    cfg.validate()?;
    Ok((file, cfg))
}

fn resolve_params(file: &ConfigFile, args: &ParamArgs) -> Result<ProtocolParams> {
    let from_file = match &args.params {
        Some(path) => ConfigFile::load(path)?.params()?,
        None => None,
    };
    let base = from_file.or(file.params()?);
    let inline = [
        args.mu,
        args.mu1,
        args.mu2,
        args.p0,
        args.p10,
        args.p11,
        args.p2,
        args.delta_over_pi,
    ];
    let mut values = match base {
        Some(p) => p.to_array(),
        None if inline.iter().all(Option::is_some) => [0.0; 8],
        None => {
            return Err(Error::Config(
                "no protocol parameters: pass --params, put them in --config, or give all eight inline flags".into(),
            ))
        }
    };
    for (v, o) in values.iter_mut().zip(inline) {
        if let Some(x) = o {
            *v = x;
        }
    }
    let [mu, mu1, mu2, p0, p10, p11, p2, delta_over_pi] = values;
    let p = ProtocolParams {
        mu,
        mu1,
        mu2,
        p0,
        p10,
        p11,
        p2,
        delta_over_pi,
    };
    p.ensure_valid()?;
    Ok(p)
}

fn resolve_distance(flag: Option<f64>, file: &ConfigFile) -> Result<f64> {
    flag.or(file.distance_km)
        .ok_or_else(|| Error::Config("no distance: pass --distance or set distance_km in the config".into()))
}

fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Config(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    experiment: &'a ExperimentConfig,
    inputs: T,
}

#[derive(Serialize)]
struct RateReport<'a> {
    manifest: RunManifest,
    distance_km: f64,
    params: &'a ProtocolParams,
    #[serde(flatten)]
    result: &'a KeyRateResult,
    counts: &'a crate::params::ObservedCounts,
    coefficients: &'a DecoyCoefficients,
}

fn cmd_rate(args: &RateArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, cfg) = resolve_experiment(&args.experiment)?;
    let params = resolve_params(&file, &args.params)?;
    let distance = resolve_distance(args.distance, &file)?;
    let manifest = RunManifest::start(
        "rate",
        &Resolved {
            experiment: &cfg,
            inputs: (&params, distance),
        },
        0,
    )?;
    let eval: PointEvaluation = finite_key::evaluate(&params, &cfg, distance)?;
    write_json(
        out,
        &RateReport {
            manifest: manifest.finish(&[]),
            distance_km: distance,
            params: &params,
            result: &eval.result,
            counts: &eval.counts,
            coefficients: &eval.coefficients,
        },
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    manifest: RunManifest,
    #[serde(flatten)]
    result: &'a OptimizationResult,
}

fn cmd_optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, cfg) = resolve_experiment(&args.experiment)?;
    let distance = resolve_distance(args.distance, &file)?;
    let problem = OptimizationProblem {
        budget: args.search.budget,
        restarts: args.search.restarts,
        seed: args.search.seed,
        ..OptimizationProblem::new(cfg, distance)
    };
    let manifest = RunManifest::start(
        "optimize",
        &Resolved {
            experiment: &cfg,
            inputs: (distance, problem.budget, problem.restarts),
        },
        problem.seed,
    )?;
    let result = optimize::optimize_point(&problem)?;
    let outputs: Vec<&Path> = args.out.iter().map(PathBuf::as_path).collect();
    let report = OptimizeReport {
        manifest: manifest.finish(&outputs),
        result: &result,
    };
    if let Some(path) = &args.out {
        write_json(create(path)?, &report)?;
    }
    write_json(out, &report)?;
    Ok(EXIT_OK)
}

fn cmd_curve(args: &CurveArgs, out: &mut dyn Write) -> Result<i32> {
    let (_, cfg) = resolve_experiment(&args.experiment)?;
    let sweep = Sweep {
        warm_start: !args.cold,
        budget: args.search.budget,
        restarts: args.search.restarts,
        seed: args.search.seed,
        ..Sweep::new(Sweep::range(args.from, args.to, args.step)?, cfg)
    };
    let manifest = RunManifest::start(
        "curve",
        &Resolved {
            experiment: &cfg,
            inputs: (&sweep.distances, sweep.warm_start, sweep.budget, sweep.restarts),
        },
        sweep.seed,
    )?;
    let curve = optimize::rate_curve(&sweep)?;
    let outputs: Vec<&Path> = args.out.iter().chain(&args.json).map(PathBuf::as_path).collect();
    let manifest = manifest.finish(&outputs);
    let line = serde_json::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let comment = format!("manifest {line}");
    match &args.out {
        Some(path) => optimize::write_curve_csv(create(path)?, &curve, &cfg, Some(&comment))?,
        None => optimize::write_curve_csv(&mut *out, &curve, &cfg, Some(&comment))?,
    }
    if let Some(path) = &args.json {
        #[derive(Serialize)]
        struct CurveReport<'a> {
            manifest: &'a RunManifest,
            points: &'a [OptimizationResult],
        }
        write_json(
            create(path)?,
            &CurveReport {
                manifest: &manifest,
                points: &curve,
            },
        )?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    manifest: RunManifest,
    params: &'a ProtocolParams,
    #[serde(flatten)]
    report: &'a CertReport,
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, cfg) = resolve_experiment(&args.experiment)?;
    let params = resolve_params(&file, &args.params)?;
    let check = DominanceCheck {
        n_max: args.n_max,
        delta_grid: args.grid,
        tol: args.tol,
    };
    let mut weights = DominanceWeights::from_params(&params)?;
    if let Some(l) = args.lambda {
        weights.lambda = l;
    }
    weights.lambda *= args.lambda_scale;
    let manifest = RunManifest::start(
        "verify-dominance",
        &Resolved {
            experiment: &cfg,
            inputs: (&params, &check, &weights),
        },
        0,
    )?;
    let report = dominance::verify_dominance_with(&params, &weights, &check)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(
        out,
        &VerifyReport {
            manifest: manifest.finish(&[]),
            params: &params,
            report: &report,
        },
    )?;
    Ok(if report.pass { EXIT_OK } else { EXIT_INVALID })
}

#[derive(Serialize)]
struct SimReport<'a> {
    manifest: RunManifest,
    distance_km: f64,
    params: &'a ProtocolParams,
    #[serde(flatten)]
    tally: &'a SimTally,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<KeyRateResult>,
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, cfg) = resolve_experiment(&args.experiment)?;
    let params = resolve_params(&file, &args.params)?;
    let distance = resolve_distance(args.distance, &file)?;
    let model = match args.model {
        ModelArg::PaperFaithful => SamplingModel::PaperFaithful,
        ModelArg::Physical => SamplingModel::Physical,
    };
    let manifest = RunManifest::start(
        "simulate",
        &Resolved {
            experiment: &cfg,
            inputs: (&params, distance, args.rounds, model),
        },
        args.seed,
    )?;
    let point = ChannelPoint::new(distance, &cfg, params.delta());
    let tally = match &args.trace {
        Some(path) => montecarlo::simulate_traced(&params, &cfg, &point, args.rounds, args.seed, model, create(path)?)?,
        None => montecarlo::simulate(&params, &cfg, &point, args.rounds, args.seed, model)?,
    };
    let evaluation = if args.evaluate {
        let mut scaled = cfg;
        scaled.n_tot = args.rounds as f64;
        let coefficients = photon::decoy_coefficients(&params, cfg.variant, photon::DEFAULT_REL_TOL)?;
        Some(finite_key::evaluate_counts(&params, &scaled, point, tally.counts, coefficients).result)
    } else {
        None
    };
    let outputs: Vec<&Path> = args.trace.iter().map(PathBuf::as_path).collect();
    write_json(
        out,
        &SimReport {
            manifest: manifest.finish(&outputs),
            distance_km: distance,
            params: &params,
            tally: &tally,
            evaluation,
        },
    )?;
    Ok(EXIT_OK)
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Domain(_) | Error::NonFinite(_) | Error::InvalidParams(_) | Error::Config(_) => EXIT_INVALID,
        Error::NonConvergent(_) | Error::Eigen(_) => EXIT_NUMERICAL,
    }
}

/// Runs a parsed command, writing its main output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, in which case that one is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Rate(a) => cmd_rate(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Curve(a) => cmd_curve(a, out),
        Command::VerifyDominance(a) => cmd_verify(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
    }
}

/// Parses `std::env::args`, runs, reports errors on stderr and returns the exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
