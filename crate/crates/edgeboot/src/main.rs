use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgeboot::harness::{self, ExperimentConfig, ExperimentKind, RunOutcome};
use edgeboot::Error;

#[derive(Parser)]
#[command(name = "edgeboot", version, about = "Bootstrap-vs-expansion experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores). Results are bit-identical
    /// regardless of this setting.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap distribution vs expansion over a region list.
    Compare(RunArgs),
    /// Decay-rate fits for the sample-event failure probabilities.
    Rates(RunArgs),
    /// Boundary-shell probability scaling experiment.
    Prop1(RunArgs),
    /// Event indicators and the CF-distance integral on simulated samples.
    Diagnose(RunArgs),
    /// Run every deterministic cross-check and report pass/fail.
    Oracle(RunArgs),
}

fn load(args: &RunArgs, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if cfg.kind != kind {
        return Err(Error::Config(format!(
            "config declares a different experiment kind than the subcommand"
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(args: &RunArgs, kind: ExperimentKind) -> ExitCode {
    let cfg = match load(args, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let run = || harness::run(&cfg);
    let outcome = match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
            match pool {
                Ok(p) => p.install(run),
                Err(e) => {
                    eprintln!("failed to build thread pool: {e}");
                    return ExitCode::from(1);
                }
            }
        }
        None => run(),
    };
    match outcome {
        Ok(RunOutcome::Success) => {
            println!("ok: outputs in {}", cfg.out_dir.display());
            ExitCode::SUCCESS
        }
        Ok(RunOutcome::OracleFailed) => {
            eprintln!("oracle suite failed; see {}", cfg.out_dir.join("oracle_report.txt").display());
            ExitCode::from(3)
        }
        Ok(RunOutcome::ThresholdFailed(msg)) => {
            eprintln!("threshold failed: {msg}");
            ExitCode::from(4)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Compare(a) => execute(a, ExperimentKind::Compare),
        Command::Rates(a) => execute(a, ExperimentKind::Rates),
        Command::Prop1(a) => execute(a, ExperimentKind::Prop1),
        Command::Diagnose(a) => execute(a, ExperimentKind::Diagnose),
        Command::Oracle(a) => execute(a, ExperimentKind::Oracle),
    }
}
