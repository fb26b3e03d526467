//! Running a written composite inside its node with full log capture.

use std::fs::File;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::composer::CompositeScript;
use crate::error::{Error, IoContext, Result};
use crate::lock::NodeLock;

pub const RUN_ID_VAR: &str = "JOBRUNNER_RUN_ID";

/// Exit code reported for a run killed by `--timeout`.
pub const TIMEOUT_EXIT_CODE: i32 = 124;

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Injected as `JOBRUNNER_RUN_ID`.
    pub run_id: String,
    /// Command prefix the composite path is appended to, e.g. `["sbatch"]`.
    pub dispatch: Option<Vec<String>>,
    pub timeout: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Exited { code: i32 },
    Signaled { signal: i32 },
    TimedOut,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Exited { code } => code,
            RunStatus::Signaled { signal } => 128 + signal,
            RunStatus::TimedOut => TIMEOUT_EXIT_CODE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub composite_path: PathBuf,
    pub status: RunStatus,
    pub exit_code: i32,
    pub stdout_log: PathBuf,
    pub stderr_log: PathBuf,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_secs: f64,
}

impl ExecutionResult {
    pub fn success(&self) -> bool {
        self.status == RunStatus::Exited { code: 0 }
    }
}

/// Runs `<node>/job.<task>` with the node as working directory.
///
/// A non-zero exit is a reported outcome; only failing to start the process
/// (or to set up its logs and lock) is an error.
pub fn execute(composite: &CompositeScript, opts: &ExecOptions) -> Result<ExecutionResult> {
    let node = &composite.target_node;
    let _lock = NodeLock::acquire(node, &composite.target_rel)?;

    let composite_path = composite.path();
    let stdout_log = node.join(format!("{}.out", composite.file_name()));
    let stderr_log = node.join(format!("{}.err", composite.file_name()));
    let stdout = File::create(&stdout_log).at(&stdout_log)?;
    let stderr = File::create(&stderr_log).at(&stderr_log)?;

    let mut command = match &opts.dispatch {
        Some(prefix) if !prefix.is_empty() => {
            let mut c = Command::new(&prefix[0]);
            c.args(&prefix[1..]).arg(&composite_path);
            c
        }
        _ => Command::new(&composite_path),
    };
    let program = command.get_program().to_string_lossy().into_owned();
    command
        .current_dir(node)
        .env(RUN_ID_VAR, &opts.run_id)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .process_group(0);

    let started_at = Utc::now();
    let clock = Instant::now();
    let mut child = command
        .spawn()
        .map_err(|source| Error::Spawn { program, source })?;
    let status = wait(&mut child, opts.timeout).at(&composite_path)?;
    let elapsed = clock.elapsed();
    let finished_at = started_at
        + chrono::Duration::from_std(elapsed).unwrap_or(chrono::Duration::MAX);

    Ok(ExecutionResult {
        composite_path,
        status,
        exit_code: status.exit_code(),
        stdout_log,
        stderr_log,
        started_at,
        finished_at,
        duration_secs: elapsed.as_secs_f64(),
    })
}

fn wait(child: &mut Child, timeout: Option<Duration>) -> std::io::Result<RunStatus> {
    let Some(timeout) = timeout else {
        return child.wait().map(status_of);
    };
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(status_of(status));
        }
        let now = Instant::now();
        if now >= deadline {
            // The child leads its own process group; take the whole group down.
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            child.wait()?;
            return Ok(RunStatus::TimedOut);
        }
        thread::sleep((deadline - now).min(Duration::from_millis(20)));
    }
}

fn status_of(status: ExitStatus) -> RunStatus {
    match (status.code(), status.signal()) {
        (Some(code), _) => RunStatus::Exited { code },
        (None, Some(signal)) => RunStatus::Signaled { signal },
        (None, None) => RunStatus::Exited { code: -1 },
    }
}
