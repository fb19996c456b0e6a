//! Running spliced programs under a wall-clock limit.
//!
//! Each execution gets its own scratch directory and process group. On
//! timeout the whole group is killed; afterwards any remaining group members
//! (including orphaned grandchildren re-parented to us) are killed and reaped.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::ExecError;
use crate::sandbox::bundle::{CleanupPolicy, TaskBundle};

/// The score marker prefix printed by evaluators.
pub const SCORE_MARKER: &str = "tuso_evaluate:";
pub const START_MARKER: &str = "tuso_model_start";
pub const END_MARKER: &str = "tuso_model_end";
/// Default per-stream capture cap (tail is kept).
pub const OUTPUT_CAP: usize = 1 << 20;
/// Extra time allowed past the limit before an execution is considered overdue.
pub const KILL_GRACE: Duration = Duration::from_secs(5);
const POLL: Duration = Duration::from_millis(10);

/// How a process ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitInfo {
    Code(i32),
    Signal(i32),
}

impl ExitInfo {
    pub fn success(self) -> bool {
        self == ExitInfo::Code(0)
    }

    fn from_status(status: ExitStatus) -> Self {
        match (status.code(), status.signal()) {
            (Some(c), _) => ExitInfo::Code(c),
            (None, Some(s)) => ExitInfo::Signal(s),
            (None, None) => ExitInfo::Code(-1),
        }
    }
}

impl std::fmt::Display for ExitInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExitInfo::Code(c) => write!(f, "exit code {c}"),
            ExitInfo::Signal(s) => write!(f, "killed by signal {s}"),
        }
    }
}

/// Outcome of one execution. Always produced, whatever the program did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub stdout: String,
    pub stderr: String,
    pub exit: ExitInfo,
    pub duration_ms: u64,
    pub timed_out: bool,
    pub score: Option<f64>,
    pub started_marker_seen: bool,
    pub finished_marker_seen: bool,
    /// Scratch directory, when kept.
    pub scratch_dir: Option<PathBuf>,
    /// Process group the program ran in (diagnostic; not journaled).
    #[serde(skip)]
    pub process_group: Option<i32>,
}

impl ExecutionReport {
    pub fn duration(&self) -> Duration {
        Duration::from_millis(self.duration_ms)
    }

    /// Short description of why no score was produced.
    pub fn status_line(&self) -> String {
        if self.timed_out {
            format!("timed out after {} ms", self.duration_ms)
        } else if self.score.is_some() {
            "ok".to_string()
        } else if self.exit.success() {
            format!("exited normally but printed no `{SCORE_MARKER}` line")
        } else {
            self.exit.to_string()
        }
    }
}

/// Score from the last line starting with the marker; absent if missing or
/// not a finite decimal. The decimal point is always `.`.
pub fn parse_score(stdout: &str) -> Option<f64> {
    let line = stdout.lines().rev().find(|l| l.starts_with(SCORE_MARKER))?;
    let value = line[SCORE_MARKER.len()..].trim();
    let looks_decimal = !value.is_empty()
        && value.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_decimal {
        return None;
    }
    value.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Keep the last `n` characters of `text`.
pub fn tail_chars(text: &str, n: usize) -> String {
    let count = text.chars().count();
    if count <= n {
        return text.to_string();
    }
    text.chars().skip(count - n).collect()
}

/// Runs programs for a bundle.
#[derive(Debug, Clone)]
pub struct Executor {
    scratch_root: PathBuf,
    output_cap: usize,
}

impl Executor {
    pub fn new(scratch_root: impl Into<PathBuf>) -> Self {
        Executor { scratch_root: scratch_root.into(), output_cap: OUTPUT_CAP }
    }

    pub fn with_output_cap(mut self, cap: usize) -> Self {
        self.output_cap = cap.max(1);
        self
    }

    pub fn scratch_root(&self) -> &Path {
        &self.scratch_root
    }

    /// Execute under the bundle's own time limit.
    pub fn execute(&self, program: &str, bundle: &TaskBundle) -> Result<ExecutionReport, ExecError> {
        self.execute_with_limit(program, bundle, bundle.time_limit())
    }

    pub fn execute_with_limit(
        &self,
        program: &str,
        bundle: &TaskBundle,
        limit: Duration,
    ) -> Result<ExecutionReport, ExecError> {
        let argv = bundle.resolve_command()?;
        std::fs::create_dir_all(&self.scratch_root).map_err(ExecError::Scratch)?;
        let scratch = tempfile::Builder::new()
            .prefix("exec-")
            .tempdir_in(&self.scratch_root)
            .map_err(ExecError::Scratch)?;
        let program_path = scratch.path().join(&bundle.program_file);
        std::fs::write(&program_path, program).map_err(ExecError::Scratch)?;

        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .arg(&program_path)
            .current_dir(scratch.path())
            .env("TUSO_DATASET", &bundle.dataset_path)
            .env("TUSO_BUNDLE_DIR", &bundle.root)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        become_subreaper();
        let started = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|source| ExecError::SpawnFailure { command: argv.join(" "), source })?;
        let pgid = child.id() as i32;
        let stdout = spawn_reader(child.stdout.take(), self.output_cap);
        let stderr = spawn_reader(child.stderr.take(), self.output_cap);

        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {}
                Err(e) => {
                    log::warn!("waiting for candidate failed: {e}");
                    kill_group(pgid);
                    break child.wait().map_err(ExecError::Scratch)?;
                }
            }
            if started.elapsed() >= limit {
                timed_out = true;
                kill_group(pgid);
                break child.wait().map_err(ExecError::Scratch)?;
            }
            thread::sleep(POLL);
        };
        let duration = started.elapsed();
        // Leftover group members (background jobs) never outlive an execution.
        kill_group(pgid);
        reap_group(pgid, Duration::from_secs(2));

        // Scratch paths are random; mask them so reports (and journals) of
        // identical runs are identical.
        let stdout = mask_path(collect(stdout, Duration::from_secs(2)), scratch.path());
        let stderr = mask_path(collect(stderr, Duration::from_secs(2)), scratch.path());
        let exit = ExitInfo::from_status(status);
        let score = if !timed_out && exit.success() { parse_score(&stdout) } else { None };
        let keep = score.is_none() || bundle.cleanup == CleanupPolicy::Keep;
        let scratch_dir = if keep { Some(scratch.keep()) } else { None };
        Ok(ExecutionReport {
            started_marker_seen: stdout.lines().any(|l| l.trim() == START_MARKER),
            finished_marker_seen: stdout.lines().any(|l| l.trim() == END_MARKER),
            stdout,
            stderr,
            exit,
            duration_ms: duration.as_millis() as u64,
            timed_out,
            score,
            scratch_dir,
            process_group: Some(pgid),
        })
    }
}

/// Replace occurrences of `dir` in `text` with `<scratch>`.
fn mask_path(text: String, dir: &Path) -> String {
    let raw = dir.to_string_lossy();
    if raw.is_empty() || !text.contains(raw.as_ref()) {
        return text;
    }
    text.replace(raw.as_ref(), "<scratch>")
}

/// Make orphaned grandchildren re-parent to this process so they can be reaped.
fn become_subreaper() {
    #[cfg(target_os = "linux")]
    unsafe {
        libc::prctl(libc::PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0);
    }
}

fn kill_group(pgid: i32) {
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

/// True while any process in the group exists (zombies included).
pub fn group_alive(pgid: i32) -> bool {
    unsafe { libc::kill(-pgid, 0) == 0 }
}

fn reap_group(pgid: i32, deadline: Duration) {
    let start = Instant::now();
    loop {
        let mut status = 0;
        let pid = unsafe { libc::waitpid(-pgid, &mut status, libc::WNOHANG) };
        if pid > 0 {
            continue;
        }
        if !group_alive(pgid) || start.elapsed() >= deadline {
            return;
        }
        thread::sleep(Duration::from_millis(5));
    }
}

type Capture = mpsc::Receiver<(String, bool)>;

fn spawn_reader<R: Read + Send + 'static>(source: Option<R>, cap: usize) -> Capture {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut buf: Vec<u8> = Vec::new();
        let mut truncated = false;
        if let Some(mut source) = source {
            let mut chunk = [0u8; 8192];
            loop {
                match source.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        buf.extend_from_slice(&chunk[..n]);
                        if buf.len() > cap {
                            let excess = buf.len() - cap;
                            buf.drain(..excess);
                            truncated = true;
                        }
                    }
                }
            }
        }
        let _ = tx.send((String::from_utf8_lossy(&buf).into_owned(), truncated));
    });
    rx
}

fn collect(rx: Capture, wait: Duration) -> String {
    match rx.recv_timeout(wait) {
        Ok((text, truncated)) => {
            if truncated {
                log::debug!("candidate output truncated to its tail");
            }
            text
        }
        // A descendant that escaped the group still holds the pipe open.
        Err(_) => String::new(),
    }
}
