//! `cgraph`: enumerate and prune computational states, generate samples,
//! run benchmark matrices, and measure coverage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bench;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Parse(String),
    Validation(String),
    NoPath(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 3,
            CliError::Validation(_) => 4,
            CliError::NoPath(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::NoPath(m) => write!(f, "{m}"),
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
        CliError::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "cgraph", version, about = "Sample diverse solutions of factored nonlinear constraint problems")]
struct Cli {
    /// Directory holding `<family>_<index>.cg` problem files; the embedded
    /// fixtures are used when unset.
    #[arg(long, global = true, env = "CGRAPH_FIXTURES")]
    fixtures: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count transitions before and after pruning.
    Enumerate {
        /// Problem file or scenario selector `family[:index]`.
        graph: String,
        /// Write the surviving transitions as a DOT digraph.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Generate samples for one scenario per strategy and seed.
    Sample {
        #[command(flatten)]
        overrides: Overrides,
        /// Merge the final tree statistics into this warmstart store.
        #[arg(long)]
        save_warmstart: Option<PathBuf>,
    },
    /// Run the full instances × strategies × seeds matrix.
    Bench {
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Occupied-cell coverage of sample files, one CSV row per variable.
    Coverage {
        /// Problem file or scenario selector the samples belong to.
        graph: String,
        /// JSON-lines sample files written by `sample`.
        #[arg(required = true)]
        samples: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value = "tree")]
        normalize_against: String,
    },
    /// Regenerate the scenario problem files.
    ExportScenarios {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let fixtures = cli.fixtures.as_deref();
    match cli.command {
        Command::Enumerate { graph, dot } => commands::enumerate(&graph, dot.as_deref(), fixtures),
        Command::Sample { overrides, save_warmstart } => {
            commands::sample(&overrides, save_warmstart.as_deref(), fixtures)
        }
        Command::Bench { overrides, jobs } => bench::bench(&overrides, jobs, fixtures),
        Command::Coverage { graph, samples, bins, normalize_against } => {
            commands::coverage(&graph, &samples, bins, &normalize_against, fixtures)
        }
        Command::ExportScenarios { out } => commands::export_scenarios(&out),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cgraph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
