use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use romkit::pipeline::{status_table, Pipeline, PipelineConfig, StageStatus};

#[derive(Parser)]
#[command(name = "romkit", version, about = "Reduced order modelling batch pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, short, global = true)]
    verbose: bool,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "ROMKIT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Read the source data and write grid and snapshot bundles.
    Ingest,
    /// Fit bases and sensor placements on the training split.
    Offline,
    /// Evaluate the configured estimators on the test split.
    Online,
    /// Summarize the outputs of the other stages.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Offline => "offline",
            Command::Online => "online",
            Command::Report => "report",
        }
    }
}

fn run(cli: &Cli) -> romkit::Result<Vec<StageStatus>> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| romkit::Error::Config("--config is required".into()))?;
    let config = PipelineConfig::load(path)?;
    let pipeline = Pipeline::new(config, cli.output.clone(), cli.verbose)?;
    match cli.command {
        Command::Ingest => pipeline.ingest(),
        Command::Offline => pipeline.offline(),
        Command::Online => pipeline.online(),
        Command::Report => pipeline.report(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("romkit: cannot set thread count: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    let rows = run(&cli).unwrap_or_else(|e| {
        vec![StageStatus {
            stage: cli.command.name().into(),
            ok: false,
            detail: e.to_string(),
        }]
    });
    print!("{}", status_table(&rows));
    if rows.iter().all(|r| r.ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
