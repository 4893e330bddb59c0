//! The `blocksvd` command line: split, train, evaluate, benchmark, rerun.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 training
//! diverged.

pub mod args;
pub mod artifact;
pub mod bench;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod runner;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;

use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// A bad flag, config value or combination of options.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        match cause.downcast_ref::<blocksvd_core::Error>() {
            Some(blocksvd_core::Error::Diverged(_)) => return EXIT_DIVERGED,
            Some(blocksvd_core::Error::InvalidArgument(_)) => return EXIT_USAGE,
            Some(_) => return EXIT_DATA,
            None => {}
        }
    }
    EXIT_DATA
}

pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let settings = config::Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Split(a) => commands::split(&settings, a, out),
        Command::Train(a) => commands::train(&settings, a, out),
        Command::Evaluate(a) => commands::evaluate(&settings, a, out),
        Command::Benchmark(a) => bench::run(&settings, a, out),
        Command::Rerun(a) => commands::rerun(&settings, a, out),
    }
}
