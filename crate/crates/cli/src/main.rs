use std::path::PathBuf;
use std::process::ExitCode;

use antideriv_cli::commands::{cmd_eval, cmd_filter, cmd_oracle, cmd_train};
use antideriv_cli::RunConfig;
use clap::{Parser, Subcommand};

/// Train and evaluate neural repeated antiderivatives.
#[derive(Parser)]
#[command(name = "antideriv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines); defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a field; exits 2 if the run diverged.
    Train,
    /// Write reconstruction and filter metrics for a checkpoint.
    Eval,
    /// Filter a checkpoint on the evaluation grid.
    Filter,
    /// Print oracle antiderivative values.
    Oracle,
}

const EXIT_NOT_CONVERGED: u8 = 2;

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("train.seed", seed.to_string());
    }
    match cli.command {
        Command::Train => {
            let report = cmd_train(&cfg, &cli.out)?;
            if let Some(why) = &report.failure {
                eprintln!("not converged: {why}");
                return Ok(ExitCode::from(EXIT_NOT_CONVERGED));
            }
            if let Some(loss) = report.final_loss {
                eprintln!("{} iterations, final loss {loss:e}", report.iterations_run);
            }
        }
        Command::Eval => {
            for row in cmd_eval(&cfg, &cli.out)? {
                println!("{row}");
            }
        }
        Command::Filter => {
            let n = cmd_filter(&cfg, &cli.out)?;
            eprintln!("filtered {n} points");
        }
        Command::Oracle => cmd_oracle(&cfg, &cli.out, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
