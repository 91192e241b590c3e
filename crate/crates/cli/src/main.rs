//! Command-line front end for the connectivity pipeline.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use effconn::crossval::ModelKind;
use effconn::Error;

use config::{Method, PipelineConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Gcn,
    Ltp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gcn => ModelKind::Gcn,
            ModelArg::Ltp => ModelKind::Ltp,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "effconn",
    version,
    about = "Directed-connectivity pipeline: simulate, estimate, classify, explain, report"
)]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, default_value = "effconn.toml")]
    config: PathBuf,

    /// Connectivity estimator
    #[arg(long, global = true, value_enum, default_value_t = Method::Rcc)]
    method: Method,

    /// Override the configured classifier model
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,

    /// Override the configured root seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Skip subjects whose connectivity files already match the
    /// configuration digest
    #[arg(long, global = true)]
    resume: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic cohort with planted group differences
    Simulate,
    /// Estimate one connectivity matrix per subject per lag
    Ec,
    /// Cross-validate the classifier and train the full-cohort model
    Classify,
    /// Attribute classifications to edges and brain regions
    Explain,
    /// Emit plot-ready summary tables
    Report,
}

fn run(cli: Cli) -> effconn::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::argument("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::argument(format!("cannot size the worker pool: {e}")))?;
    }
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(model) = cli.model {
        cfg.classifier.model = model.into();
    }
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg),
        Command::Ec => pipeline::cmd_ec(&cfg, cli.method, cli.resume),
        Command::Classify => pipeline::cmd_classify(&cfg, cli.method),
        Command::Explain => pipeline::cmd_explain(&cfg, cli.method),
        Command::Report => pipeline::cmd_report(&cfg, cli.method),
    }
}

/// 0 success, 2 configuration error, 3 data error, 4 numerical error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => 2,
        Error::Parse { .. } | Error::Data(_) | Error::Io(_) => 3,
        Error::Numerical(_) | Error::Dynamics { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
