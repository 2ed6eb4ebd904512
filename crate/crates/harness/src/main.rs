use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsmvi_harness::{load_config, run_experiment};

/// Gaussian score-matching VI benchmark runner.
#[derive(Parser)]
#[command(name = "gsmvi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

// exit codes: 0 success, 1 config error, 2 runtime failure
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Run { config, output_dir } => {
            let mut config = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(dir) = output_dir {
                config.output_dir = dir;
            }
            match run_experiment(&config) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(_) => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
