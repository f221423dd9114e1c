//! Command-line front end: config merging, dispatch and table output.

pub mod config;
pub mod output;
mod run;

use std::fmt;
use std::fs;
use std::io::Write;

use clap::Parser;
use escape_spectral::Error;

pub use config::{Cli, RunConfig};
pub use output::{Cell, Table};
pub use run::execute;

pub const THREADS_ENV: &str = "ESCAPE_SPECTRAL_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerics(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 4,
            CliError::Numerics(e) => match e {
                Error::Domain { .. }
                | Error::Unsupported(_)
                | Error::Resource { .. }
                | Error::Regime(_)
                | Error::Bracket { .. } => 2,
                Error::Convergence { .. }
                | Error::IllConditioned { .. }
                | Error::WindowTooSmall { .. }
                | Error::Discretization(_) => 3,
                Error::Io(_) | Error::Format(_) => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Numerics(e) => write!(f, "{e}"),
            CliError::Io(s) => write!(f, "i/o error: {s}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numerics(e)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))
}

/// Runs one command and writes its table; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("escape-spectral: {e}");
            e.exit_code()
        }
    }
}

fn run_cli(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let cfg = RunConfig::from_cli(cli)?;
    let table = execute(&cfg)?;
    let text = table.render(cfg.format);
    match &cfg.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
