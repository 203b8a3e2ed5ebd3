use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use branchlab_core::harness::{self, ExperimentConfig, ExperimentKind, Severity};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "branchlab",
    version,
    about = "Monte Carlo experiments on subcritical Galton-Watson processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths and report mean sizes and extinction times.
    Simulate(RunArgs),
    /// Run the truncated and shifted processes alongside the original.
    Coupled(RunArgs),
    /// Extinction time against c log K over a list of K.
    ExtinctionScaling(RunArgs),
    /// Covariance of the centred, rescaled sizes against both formulas.
    CltCheck(RunArgs),
    /// Conditional moments of X at u1 tau given X at u2 tau.
    ConditionalMoments(RunArgs),
    /// Conditional moments given the extinction time.
    ConditionalOnTau(RunArgs),
    /// Relative deviation invariance of the conditional log-moment.
    Invariance(RunArgs),
    /// Print the limiting covariance matrix as CSV.
    GaussianCov(RunArgs),
    /// Check a configuration without running it.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Root directory for run outputs (default: runs).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write plot.csv.
    #[arg(long)]
    plot_data: bool,
}

impl Command {
    fn parts(&self) -> (Option<ExperimentKind>, &RunArgs) {
        use ExperimentKind as K;
        match self {
            Command::Simulate(a) => (Some(K::Simulate), a),
            Command::Coupled(a) => (Some(K::Coupled), a),
            Command::ExtinctionScaling(a) => (Some(K::ExtinctionScaling), a),
            Command::CltCheck(a) => (Some(K::CltCheck), a),
            Command::ConditionalMoments(a) => (Some(K::ConditionalMoments), a),
            Command::ConditionalOnTau(a) => (Some(K::ConditionalOnTau), a),
            Command::Invariance(a) => (Some(K::Invariance), a),
            Command::GaussianCov(a) => (Some(K::GaussianCov), a),
            Command::Validate(a) => (None, a),
        }
    }
}

/// Reads the file, fills in the subcommand's kind and applies flag overrides.
fn load(kind: Option<ExperimentKind>, args: &RunArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let Some(map) = value.as_object_mut() else {
        bail!("{}: expected a JSON object", args.config.display());
    };
    if let Some(kind) = kind {
        let name = kind.as_str();
        match map.get("kind").and_then(|k| k.as_str()) {
            Some(existing) if existing != name => {
                bail!("config kind is {existing:?} but the subcommand is {name:?}")
            }
            _ => {
                map.insert("kind".into(), name.into());
            }
        }
    }
    let mut cfg: ExperimentConfig =
        serde_json::from_value(value).with_context(|| format!("invalid config {}", args.config.display()))?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(p) = args.paths {
        cfg.paths = p;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if cfg.out.is_none() {
        cfg.out = Some(PathBuf::from("runs"));
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    cfg.plot_data |= args.plot_data;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<u8> {
    let (kind, args) = cli.command.parts();
    let cfg = load(kind, args)?;
    if kind.is_none() {
        let diags = harness::validate(&cfg);
        for d in &diags {
            println!("{d}");
        }
        return Ok(u8::from(diags.iter().any(|d| d.severity == Severity::Error)));
    }
    eprintln!(
        "branchlab: {} with {} paths in {} batches on {} worker(s)",
        cfg.kind.as_str(),
        cfg.paths,
        cfg.batches,
        cfg.workers.unwrap_or(1)
    );
    let out = harness::run(&cfg)?;
    for w in &out.warnings {
        eprintln!("branchlab: {w}");
    }
    if let Some(s) = &out.stdout {
        print!("{s}");
    }
    if let Some(dir) = &out.dir {
        eprintln!("branchlab: wrote {}", dir.display());
        if out.stdout.is_none() {
            println!("{}", dir.join("report.json").display());
        }
    }
    for e in out.report.failures() {
        eprintln!("branchlab: FAIL {} = {} (target {:?})", e.name, e.estimate, e.target);
    }
    Ok(out.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("branchlab: error: {e:#}");
            ExitCode::from(2)
        }
    }
}
