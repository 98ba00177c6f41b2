//! The `neoscan` command-line tool: simulator, recorder, live monitor,
//! offline detection, ICA cleaning, two-device quality analysis and dataset
//! preparation.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 protocol, 4 numeric failure.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod inputs;
pub mod pipeline;
pub mod prepare;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use cli::Cli;
pub use config::AppConfig;
pub use error::{CliError, ExitCode, Result};
pub use pipeline::{EpochReport, Pipeline, PipelineConfig, PipelineEvent, PipelineStats};

/// Parses `args`, runs the command writing to `out`, reports failures on
/// standard error and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Usage as i32 } else { ExitCode::Success as i32 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::run(cli, out).and_then(|()| out.flush().map_err(CliError::from)) {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("neoscan: {e}");
            e.exit_code() as i32
        }
    }
}
