use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stacklab::{Experiment, Overrides, RunError};

/// Exact cutting-and-stacking experiments.
#[derive(Debug, Parser)]
#[command(name = "stacklab", version)]
struct Cli {
    /// build, sample, screen, diagnose, montecarlo or chacon-scan
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_path`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return fail(&RunError::Config(
                e.kind().to_string() + ": " + &first_line(&e.to_string()),
            ))
        }
    };
    let result = cli.experiment.parse::<Experiment>().and_then(|experiment| {
        let overrides = Overrides {
            experiment: Some(experiment),
            output_path: cli.out,
            trials: cli.trials,
            master_seed: cli.seed,
        };
        stacklab::run(&cli.config, &overrides)
    });
    match result {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn first_line(s: &str) -> String {
    s.lines()
        .next()
        .unwrap_or_default()
        .trim_start_matches("error: ")
        .to_string()
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("{}", e.to_json_line());
    ExitCode::from(e.exit_code() as u8)
}
