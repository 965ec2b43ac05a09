use std::process::ExitCode;

use clap::Parser;
use qvlasov::cli::{run, Cli, EXIT_CHECK_FAILED};
use qvlasov::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) if outcome.checks_passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("error: one or more invariant checks failed (see manifest.json)");
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
