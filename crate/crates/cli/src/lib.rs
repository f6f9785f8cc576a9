//! Command-line driver for factedit: JSON-lines instance I/O, configuration, traces and the
//! `correct`, `eval`, `selfcheck` and `trace-view` commands.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod instances;
pub mod trace;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_OK, EXIT_USAGE};

/// Parses `argv` and runs the command, writing results to `out`. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.command {
        Command::Correct(a) => commands::correct(a, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::Selfcheck(a) => commands::selfcheck_command(a, out),
        Command::TraceView(a) => commands::trace_view(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::SelfCheckFailed) => CliError::SelfCheckFailed.exit_code(),
        Err(e) => {
            eprintln!("factedit: {e}");
            e.exit_code()
        }
    }
}
