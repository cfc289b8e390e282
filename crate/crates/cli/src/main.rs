use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ltomo_cli::commands;
use ltomo_cli::config::{ExperimentConfig, Method, Overrides};
use ltomo_cli::{CliError, CliResult};

/// Caps the worker pool; unset means one thread per core.
const THREADS_ENV: &str = "LTOMO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ltomo", version, about = "Truncated-projection CT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize the phantom.
    Phantom,
    /// Project the phantom, add noise and truncate.
    Project,
    /// Filtered backprojection of the truncated data.
    Fbp,
    /// Reconstruct with the configured method.
    Reconstruct,
    /// Score a reconstruction and print the comparison table.
    Metrics,
    /// Run every stage for every configured method.
    Pipeline,
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let cfg = ExperimentConfig::load(&cli.overrides)?;
    match cli.command {
        Command::Phantom => {
            commands::cmd_phantom(&cfg)?;
        }
        Command::Project => {
            commands::cmd_project(&cfg)?;
        }
        Command::Fbp => {
            commands::cmd_reconstruct(&cfg.with_method(Method::Fbp))?;
        }
        Command::Reconstruct => {
            commands::cmd_reconstruct(&cfg)?;
        }
        Command::Metrics => print!("{}", commands::cmd_metrics(&cfg)?),
        Command::Pipeline => print!("{}", commands::cmd_pipeline(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
