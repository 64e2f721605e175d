//! Command-line front end for `balancelab`.
//!
//! Exit status: 0 success, 2 usage error, 3 data or schema error, 4 numeric
//! domain error, 1 I/O failure.

pub mod args;
mod commands;
pub mod files;
pub mod format;

use args::{AllocateMode, Cli, Command};
use clap::Parser;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Domain(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<balancelab::Error> for CliError {
    fn from(e: balancelab::Error) -> Self {
        match e {
            balancelab::Error::Data(m) => CliError::Data(m),
            balancelab::Error::Domain(m) => CliError::Domain(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Data(format!("{other:?}")),
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit status.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    2
                }
            };
            return code;
        }
    };
    match dispatch(cli, input, out, &mut *err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Prob { model } => commands::prob(model, out),
        Command::Samplesize { model } => commands::samplesize(model, out),
        Command::Pmf { model } => commands::pmf(model, out),
        Command::Joint(args) => commands::joint(args, out),
        Command::Figure(args) => commands::figure(args, out),
        Command::Signtest { n, precision } => commands::signtest(n, precision, out),
        Command::Simulate(args) => commands::simulate(args, out),
        Command::Allocate {
            mode:
                AllocateMode::Batch {
                    cohort,
                    schema,
                    strategy,
                    report,
                    report_out,
                },
        } => commands::allocate_batch(&cohort, &schema, &strategy, &report, report_out.as_deref(), out, err),
        Command::Allocate {
            mode: AllocateMode::Sequential { schema, strategy },
        } => commands::allocate_sequential(&schema, &strategy, input, out),
        Command::Report(args) => commands::report(args, out),
    }
}
