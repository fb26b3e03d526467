//! `jobrunner`: run, archive and package lab-notebook experiment trees.
//!
//! Commands are executed from the root of an experiment tree (or with
//! `--root`). Human-readable messages go to standard error; `--json` adds
//! one machine-readable summary per target on standard output.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use jobrunner_core::archiver::parse_date_dir;
use jobrunner_core::{ErrorClass, Task};

#[derive(Debug, Parser)]
#[command(name = "jobrunner", version, about = "Directory-inherited job scripts for lab-notebook experiment trees")]
struct Cli {
    /// Experiment root (defaults to the current directory).
    #[arg(long, global = true, value_name = "DIR")]
    root: Option<PathBuf>,

    /// Print machine-readable summaries on standard output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compose and run the inherited setup scripts of each target node.
    Setup(RunArgs),
    /// Compose and run the inherited submit scripts of each target node.
    Submit(RunArgs),
    /// Move files matching the inherited archive patterns into a dated archive directory.
    Archive(ArchiveArgs),
    /// Pack every jobnode.archive of the tree into one capsule.
    Export {
        /// Capsule path (defaults to <root>/jobnode.capsule.tar).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        plain_env: bool,
    },
    /// Verify a capsule and unpack it below the root.
    Restore {
        capsule: PathBuf,
        #[arg(long)]
        plain_env: bool,
    },
    /// Seed a new experiment tree in an empty or absent root.
    Init {
        /// Experiment name (defaults to the root directory name).
        #[arg(long)]
        name: Option<String>,
        /// Comma-separated software package names.
        #[arg(long, value_delimiter = ',')]
        software: Vec<String>,
        /// Comma-separated simulation names.
        #[arg(long, value_delimiter = ',')]
        simulation: Vec<String>,
    },
    /// Print the composite script a task would run, without touching the tree.
    Show {
        #[arg(value_parser = parse_task)]
        task: Task,
        target: String,
    },
    /// Check every Jobfile and archive directory of the tree.
    Verify,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Target nodes, relative to the root, processed in order.
    #[arg(required = true)]
    targets: Vec<String>,
    /// Launcher prefix such as "sbatch" or "srun -n 4"; the composite path is appended.
    #[arg(long, value_name = "CMD")]
    dispatch: Option<String>,
    /// Kill the run after this many seconds.
    #[arg(long, value_name = "SECS", value_parser = parse_timeout)]
    timeout: Option<Duration>,
    /// Record raw environment values instead of their digests.
    #[arg(long)]
    plain_env: bool,
    /// Print the scripts and composite path without writing or running anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct ArchiveArgs {
    #[arg(required = true)]
    targets: Vec<String>,
    /// Archive date as MM-DD-YYYY (defaults to today).
    #[arg(long, value_parser = parse_date)]
    date: Option<NaiveDate>,
    /// Copy matching files instead of moving them.
    #[arg(long)]
    copy: bool,
    #[arg(long)]
    plain_env: bool,
    /// Print what would be archived without moving anything.
    #[arg(long)]
    dry_run: bool,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|_| format!("unknown task `{s}` (expected setup or submit)"))
}

fn parse_timeout(s: &str) -> Result<Duration, String> {
    match s.parse::<f64>() {
        Ok(secs) if secs.is_finite() && secs > 0.0 => Ok(Duration::from_secs_f64(secs)),
        _ => Err(format!("`{s}` is not a positive number of seconds")),
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    parse_date_dir(s).ok_or_else(|| format!("`{s}` is not a date in MM-DD-YYYY form"))
}

/// A failure that carries its own exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn class_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Io => 1,
        ErrorClass::Usage => 2,
        ErrorClass::Jobfile => 3,
        ErrorClass::Missing => 4,
        ErrorClass::Execution => 5,
        ErrorClass::Collision => 6,
        ErrorClass::Capsule => 7,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    if let Some(e) = err.downcast_ref::<jobrunner_core::Error>() {
        return class_code(e.class());
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
