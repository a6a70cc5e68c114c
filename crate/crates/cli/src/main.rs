use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relaysim::experiment::{self, ExperimentError, RunOptions};
use relaysim::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "relaysim",
    version,
    about = "Transaction propagation and anonymity simulator"
)]
struct Cli {
    /// Override run.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override run.jobs (parallel replicas in a sweep)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override run.out_dir
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the event trace (run only)
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one simulation and write its report
    Run { config: PathBuf },
    /// Execute every sweep cell and replica, then write sweep.csv
    Sweep { config: PathBuf },
    /// Rebuild sweep.csv from the per-run reports of a sweep directory
    Report { dir: PathBuf },
    /// Parse and check a config, printing the effective values
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = ExperimentConfig::parse(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out.clone(),
        trace: cli.trace.then_some(true),
        jobs: cli.jobs,
    };
    let result = match &cli.command {
        Command::Run { config } => load(config).and_then(|cfg| {
            let files = experiment::run_single(&cfg, &opts)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }),
        Command::Sweep { config } => load(config).and_then(|cfg| {
            let outcome = experiment::run_sweep(&cfg, &opts)?;
            println!("{} runs, {} failed", outcome.reports.len(), outcome.failures);
            println!("{}", outcome.csv_path.display());
            Ok(())
        }),
        Command::Report { dir } => experiment::reaggregate(dir).and_then(|csv| {
            let path = dir.join("sweep.csv");
            fs::write(&path, csv).map_err(|source| ExperimentError::Io {
                path: path.clone(),
                source,
            })?;
            println!("{}", path.display());
            Ok(())
        }),
        Command::Validate { config } => load(config).map(|cfg| print!("{}", cfg.to_text())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("relaysim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
