use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use deepmf::harness::{self, ExperimentConfig, Outcome};

#[derive(Parser)]
#[command(name = "deepmf", version, about = "Deep-network SGD against its mean-field limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run SGD (and CTGD) and write weight histories and a loss CSV.
    Train(Common),
    /// Solve the mean-field flow and write the ensemble and diagnostics.
    Meanfield(Common),
    /// Couple SGD, CTGD and ideal particles against a fixed point.
    Couple(Common),
    /// Run every (N, ε, seed) point and fit scaling slopes.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Replace the master seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| match e {
        deepmf::Error::Io { path, source } => deepmf::Error::InvalidConfig {
            field: "--config".into(),
            reason: format!("cannot read {}: {source}", path.display()),
        },
        e => e,
    })?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Meanfield(c) => ("meanfield", c),
        Command::Couple(c) => ("couple", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let cfg = load(common)?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(deepmf::Error::InvalidConfig {
                field: "--threads".into(),
                reason: "must be >= 1".into(),
            }
            .into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let outcome = match cli.command {
        Command::Train(_) => harness::train(&cfg),
        Command::Meanfield(_) => harness::meanfield(&cfg),
        Command::Couple(_) => harness::couple(&cfg),
        Command::Sweep(_) => harness::run_sweep(&cfg),
    }
    .with_context(|| format!("{name} failed"))?;
    Ok(outcome)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<deepmf::Error>()) {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Context messages down to the first library error, which already names
/// its own cause.
fn describe(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for e in err.chain() {
        parts.push(e.to_string());
        if e.downcast_ref::<deepmf::Error>().is_some() {
            break;
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} files to {}", outcome.files.len(), outcome.out.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
