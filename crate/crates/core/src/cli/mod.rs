//! The `survdist` command line.

mod args;
mod commands;

pub use args::{BatteryArgs, Cli, Command, CurveSimArgs, McArgs, OutputFormat, TestArgs};
pub use commands::{cmd_curve_sim, cmd_mc, cmd_test, OUTPUT_SCHEMA_VERSION};

use crate::error::{Error, Result};

/// Runs a parsed command line to completion.
pub fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        let (out, doc) = match &cli.command {
            Command::Test(a) => (&a.out, cmd_test(a)?),
            Command::Mc(a) => (&a.out, cmd_mc(a)?),
            Command::CurveSim(a) => (&a.out, cmd_curve_sim(a)?),
        };
        commands::emit(out, &doc)
    })
}
