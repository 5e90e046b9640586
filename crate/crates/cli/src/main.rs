//! `mega`: train parent networks and merge them by evolutionary search.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mega_core::{Error, Part};

use crate::commands::MergeOutputs;
use crate::config::{ConfigError, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "mega",
    version,
    about = "Merge trained networks with a genetic search over weight blends",
    after_help = "Every config key can also be passed as `--<key> <value>`, e.g. \
                  `--seed 56 --generations 30`. Flags override the --config file.\n\
                  MEGA_THREADS sets the worker count (0 or unset: all cores)."
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network and write its checkpoint plus a .metrics.json sidecar
    Train {
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge two checkpoints
    Merge {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-generation CSV (default: <out>.history.csv)
        #[arg(long)]
        history: Option<PathBuf>,
        /// JSON report (default: <out>.report.json)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Merge 2^k checkpoints pairwise, level by level
    MergeTree {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Root node's per-generation CSV (default: <out>.history.csv)
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Coordinate-wise mean of checkpoints
    Average {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's accuracy on one partition
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value = "val")]
        partition: Part,
    },
    /// Render a saved merge report as a table
    Report { report: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::Fitness { source, .. } | Error::Node { source, .. } => core_exit_code(source),
        Error::InvalidSpec(_)
        | Error::InvalidConfig(_)
        | Error::NotPowerOfTwo(_)
        | Error::UnknownKind(_)
        | Error::UnknownPartition(_) => 2,
        Error::NonFinite { .. } | Error::Divergence { .. } | Error::NonFiniteFitness { .. } => 4,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Report { report } = &cli.command {
        return commands::report_cmd(report);
    }
    let cfg = RunConfig::resolve(&cli.overrides)?;
    match &cli.command {
        Command::Train { out } => commands::train_cmd(&cfg, out),
        Command::Merge {
            first,
            second,
            out,
            history,
            report,
        } => commands::merge_cmd(
            &cfg,
            &[first.clone(), second.clone()],
            MergeOutputs {
                out,
                history: history.as_deref(),
                report: report.as_deref(),
            },
        ),
        Command::MergeTree {
            inputs,
            out,
            history,
            report,
        } => commands::merge_cmd(
            &cfg,
            inputs,
            MergeOutputs {
                out,
                history: history.as_deref(),
                report: report.as_deref(),
            },
        ),
        Command::Average { inputs, out } => commands::average_cmd(&cfg, inputs, out),
        Command::Eval {
            checkpoint,
            partition,
        } => commands::eval_cmd(&cfg, checkpoint, *partition),
        Command::Report { .. } => unreachable!(),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("MEGA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("MEGA_THREADS must be a count, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = thread_pool().and_then(|pool| pool.install(|| run(cli)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
