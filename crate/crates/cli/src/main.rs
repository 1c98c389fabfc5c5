//! `tms`: run, predict, analyze and sweep cooperative-learning teams.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tms_core::config::{self, ConfigError, ExperimentConfig, OutputFormat};
use tms_core::graph;
use tms_core::io;
use tms_core::sim;
use tms_core::LimitPrediction;

#[derive(Parser)]
#[command(name = "tms", version, about = "Cooperative task-learning team simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trajectory and summary.
    Simulate(RunArgs),
    /// Print the predicted limit without simulating.
    Predict(RunArgs),
    /// Frobenius form, classes and accessibility of an appraisal matrix.
    Analyze(AnalyzeArgs),
    /// Run every (grid point, seed) cell of the config's [sweep] table.
    Sweep(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Exit with status 2 if the run does not converge.
    #[arg(long)]
    require_convergence: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Config whose initial (or seeded) appraisal matrix is analyzed.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    config: Option<PathBuf>,
    /// Text matrix, one row per line.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read {}", args.config.display()))?;
    // overrides go in before validation so they are checked too
    let mut cfg = ExperimentConfig::from_toml_unchecked(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(m) = args.max_steps {
        cfg.stopping.max_steps = m;
    }
    if let Some(t) = args.tol {
        cfg.stopping.tol = t;
    }
    if let Some(f) = args.format {
        cfg.output.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    if let Some(out) = &args.out {
        cfg.output.dir = Some(out.clone());
    }
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<Option<PathBuf>> {
    match &cfg.output.dir {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn describe(prediction: &LimitPrediction) -> String {
    match prediction {
        LimitPrediction::Exact { alpha, .. } => format!("exact limit, alpha = {alpha}"),
        LimitPrediction::ClassBounds { classes } => {
            let parts: Vec<String> =
                classes.iter().map(|c| format!("class {} in [{}, {}]", c.class, c.lower, c.upper)).collect();
            format!("class bounds: {}", parts.join(", "))
        }
        LimitPrediction::Unsupported { reason } => format!("no prediction ({reason})"),
    }
}

fn simulate(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load(args)?;
    let outcome = sim::run_experiment(&cfg)?;
    let s = &outcome.summary;
    println!("regime: {:?}", s.regime);
    println!("prediction: {}", describe(&s.prediction));
    println!("converged: {} after {} steps", s.converged, s.steps_taken);
    if let Some(r) = s.residuals.headline() {
        println!("residual: {r:e}");
    }
    if let Some(dir) = out_dir(&cfg)? {
        io::write_summary(s, &dir.join("summary.json"))?;
        match cfg.output.format {
            OutputFormat::Csv => {
                io::write_trajectory(&outcome.trajectory, &dir.join("trajectory.csv"), OutputFormat::Csv)?;
                io::write_appraisal_csv(&outcome.trajectory, &dir.join("appraisal.csv"))?;
            }
            OutputFormat::Json => {
                io::write_trajectory(&outcome.trajectory, &dir.join("trajectory.json"), OutputFormat::Json)?;
            }
        }
        println!("wrote {}", dir.display());
    }
    if args.require_convergence && !s.converged {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn predict(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load(args)?;
    let (_, _, prediction) = sim::predict_config(&cfg)?;
    match out_dir(&cfg)? {
        Some(dir) => {
            io::write_prediction(&prediction, &dir.join("prediction.json"))?;
            println!("{}", describe(&prediction));
        }
        None => println!("{}", serde_json::to_string_pretty(&prediction)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let matrix = match (&args.matrix, &args.config) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            config::parse_matrix(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        }
        (None, Some(path)) => {
            let run = RunArgs {
                config: path.clone(),
                out: None,
                format: None,
                seed: args.seed,
                max_steps: None,
                tol: None,
                require_convergence: false,
            };
            load(&run)?.build_team()?.0.appraisal
        }
        (None, None) => bail!("give --matrix or --config"),
    };
    graph::check_nonnegative_square(&matrix).map_err(|e| Invalid(e.to_string()))?;
    let report = io::analysis_report(&graph::frobenius_form(&matrix));
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            io::write_analysis(&report, &dir.join("analysis.json"))?;
            println!("{} classes, {:?}", report.classes.len(), report.connectivity);
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: &RunArgs) -> Result<ExitCode> {
    let cfg = load(args)?;
    let Some(spec) = cfg.sweep.clone() else {
        return Err(Invalid("config has no [sweep] table".into()).into());
    };
    let cells = sim::batch_sweep(&cfg, &spec.grid, &spec.seeds)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    let unconverged = cells.iter().filter(|c| c.summary.as_ref().is_some_and(|s| !s.converged)).count();
    match out_dir(&cfg)? {
        Some(dir) => {
            io::write_sweep_json(&cells, &dir.join("sweep.json"))?;
            io::write_sweep_csv(&cells, &dir.join("sweep.csv"))?;
            println!("{} cells ({failed} failed), wrote {}", cells.len(), dir.display());
        }
        None => print!("{}", io::sweep_csv(&cells)),
    }
    if args.require_convergence && unconverged > 0 {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Predict(a) => predict(a),
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
