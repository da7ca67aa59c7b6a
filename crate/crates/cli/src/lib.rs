//! Command-line front end: model documents in, reports and audit findings out.

pub mod commands;
pub mod document;
pub mod output;
pub mod repl;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use document::{Loaded, ModelDocument, SCHEMA};

/// Process exit codes.
pub mod exit {
    pub const CLEAN: i32 = 0;
    /// A calculation error halted the run, or the model failed to build.
    pub const CALC_ERROR: i32 = 1;
    /// The audit produced error-severity findings.
    pub const AUDIT_ERRORS: i32 = 2;
    /// Bad arguments, unreadable files, or an invalid document.
    pub const USAGE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid model document: {0}")]
    Document(String),
    #[error("model does not build:\n{0}")]
    Build(String),
    #[error("{0}")]
    Calculation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Build(_) | CliError::Calculation(_) => exit::CALC_ERROR,
            CliError::Usage(_) | CliError::Document(_) | CliError::Io(_) => exit::USAGE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "simaudit",
    version,
    about = "Monte Carlo simulation and logic audits for formula models"
)]
pub struct Cli {
    /// Random seed (overrides the document).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of trials (overrides the document).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the document, build the model and check the simulation setup.
    Validate { path: PathBuf },
    /// Simulate and write the report JSON and trial CSVs.
    Run {
        path: PathBuf,
        /// Record failing trials and keep going instead of halting.
        #[arg(long)]
        continue_on_error: bool,
        /// Histogram bin count (default ⌈√n⌉, at most 100).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        bins: Option<u64>,
    },
    /// Sweep each assumption alone between two quantiles.
    Tornado {
        path: PathBuf,
        #[arg(long)]
        forecast: Option<String>,
        #[arg(long, default_value_t = 0.10)]
        low: f64,
        #[arg(long, default_value_t = 0.90)]
        high: f64,
    },
    /// Extract the trials whose forecast falls in a range.
    Scenario {
        path: PathBuf,
        #[arg(long)]
        forecast: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        max: Option<f64>,
        /// Write a copy of the document with this trial's inputs pasted in.
        #[arg(long)]
        apply: Option<usize>,
    },
    /// Run every detector and report findings.
    Audit {
        path: PathBuf,
        /// CSV of historical assumption values (optionally observed forecasts).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Interactive single-trial session.
    Step { path: PathBuf },
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn main_with<I, T>(
    args: I,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::CLEAN,
                _ => exit::USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == exit::CLEAN {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match commands::dispatch(&cli, input, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
