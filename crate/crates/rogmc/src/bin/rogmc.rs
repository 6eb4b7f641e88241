use std::path::PathBuf;

use clap::{Parser, Subcommand};

use rogmc::commands::{cmd_ablate, cmd_analyze, cmd_prepare, cmd_train};
use rogmc::config::{CliOverrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "rogmc",
    version,
    about = "Rating-ordinality graph matrix completion: prepare data, train, ablate, analyze"
)]
struct Cli {
    /// TOML or JSON config file; omitted fields use documented defaults.
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,
    /// Override the seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override keep_fraction (fraction of train ratings kept labeled).
    #[arg(long, value_name = "FLOAT", global = true)]
    frac: Option<f64>,
    /// Variant to train: full, no-ir, no-cp, no-cp-no-ir, exact,
    /// reverse-cumulative, no-bpr, equal-treatment.
    #[arg(long, value_name = "NAME", global = true)]
    variant: Option<String>,
    /// Root directory for run outputs.
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,
    /// Force deterministic mode (single-threaded BLAS, seeded RNG).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the raw rating file, k-core filter, split per user, mask
    /// rating labels, and write the prepared dataset.
    Prepare,
    /// Train the configured variant on the prepared dataset; writes
    /// checkpoint, history CSV, and manifest.
    Train,
    /// Train every ablation variant across the configured seeds and
    /// tabulate test RMSE.
    Ablate,
    /// Compute the preference-level distance matrix from a checkpoint;
    /// optionally sweep the loss-weight grid.
    Analyze {
        /// Checkpoint file written by `train`.
        checkpoint: PathBuf,
    },
}

/// The thread cap must be in the environment before the first BLAS call.
/// Deterministic mode pins BLAS to one thread; otherwise ROGMC_THREADS
/// bounds the pool when set.
fn configure_threads(cfg: &RunConfig) {
    let threads = if cfg.deterministic {
        "1".to_string()
    } else {
        match std::env::var("ROGMC_THREADS") {
            Ok(v) => v,
            Err(_) => return,
        }
    };
    std::env::set_var("OPENBLAS_NUM_THREADS", &threads);
    std::env::set_var("OMP_NUM_THREADS", &threads);
}

fn run(cli: Cli) -> rogmc::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&CliOverrides {
        seed: cli.seed,
        frac: cli.frac,
        variant: cli.variant.clone(),
        out: cli.out.clone(),
        deterministic: cli.deterministic,
    });
    configure_threads(&cfg);
    match cli.command {
        Command::Prepare => cmd_prepare(&cfg).map(|_| ()),
        Command::Train => cmd_train(&cfg).map(|_| ()),
        Command::Ablate => cmd_ablate(&cfg).map(|_| ()),
        Command::Analyze { checkpoint } => cmd_analyze(&checkpoint, &cfg).map(|_| ()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
