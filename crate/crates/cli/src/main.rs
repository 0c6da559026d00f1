use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use laplace_cauchy_cli::config::{parse_config_with, Experiment};
use laplace_cauchy_cli::runner::run;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "LAPLACE_CAUCHY_OUT_DIR";

#[derive(Parser)]
#[command(name = "laplace-cauchy", version, about = "Cauchy problem for the Laplace equation: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Solve {
        config: PathBuf,
        /// Overrides `experiment` in the config.
        #[arg(long)]
        experiment: Option<Experiment>,
        /// Overrides `[output] dir`; with neither set, $LAPLACE_CAUCHY_OUT_DIR, then `results`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

// Exit codes: 0 success, 1 runtime failure, 2 bad config or usage, 3 a
// configured threshold was missed.
fn main() -> ExitCode {
    let Command::Solve { config, experiment, out_dir, seed } = Cli::parse().command;
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let parsed = parse_config_with(&text, |cfg| {
        if let Some(e) = experiment {
            cfg.experiment = e;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
    });
    let cfg = match parsed {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let dir = out_dir
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let config_dir = config.parent().unwrap_or(Path::new("."));
    match run(&cfg, &dir, config_dir) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
