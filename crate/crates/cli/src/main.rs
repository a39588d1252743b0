use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gisc_cli::{load_config, run_command, Command, RunOptions};

/// Small-signal and time-domain stability studies of a grid-following VSC.
///
/// Exit codes: 0 stable or success, 1 unstable (analyze), 2 marginal,
/// 11 configuration error, 12 I/O error, 13 analysis error.
#[derive(Debug, Parser)]
#[command(name = "gisc", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a configuration key: `section.key=value` or `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Repeat the simulation at half the step and report the difference.
    #[arg(long)]
    dt_halve: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load_config(&args.config, &args.set).and_then(|cfg| {
        run_command(
            args.command,
            &cfg,
            &args.out,
            RunOptions {
                dt_halve: args.dt_halve,
            },
        )
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
