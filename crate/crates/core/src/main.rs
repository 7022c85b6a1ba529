use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = survdist::cli::Cli::parse();
    match survdist::cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
