//! Append-only run journal: one JSON object per line, flushed per record.
//!
//! The reader tolerates a torn final line (a crash mid-write) and reports it;
//! any other unparsable line is a `CorruptJournal` error naming its index.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{BackendConfig, RunConfig};
use crate::error::JournalError;
use crate::knowledge::{FeedbackEntry, KnowledgeTree};
use crate::literature::{LiteratureSpec, PaperSummary};
use crate::pool::{ActionKind, Solution, SolutionId};
use crate::rng::Stream;
use crate::sandbox::{ExecPurpose, ExecutionReport, ExitInfo, TaskBundle, FEEDBACK_TAIL_CHARS};

/// Everything needed to rebuild a run: written once as the first record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub version: String,
    pub config: RunConfig,
    pub bundle: TaskBundle,
    pub warm_start: Option<String>,
    pub backend: BackendConfig,
    pub literature: LiteratureSpec,
    /// Prompt asset directory; `None` means the bundled assets.
    pub prompts: Option<PathBuf>,
}

/// Execution report as journaled: deterministic fields and output tails only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecRecord {
    pub exit: ExitInfo,
    pub duration_ms: u64,
    pub timed_out: bool,
    pub score: Option<f64>,
    pub started_marker_seen: bool,
    pub finished_marker_seen: bool,
    pub stdout_tail: String,
    pub stderr_tail: String,
}

impl ExecRecord {
    /// `duration_ms` is the run clock's charge, not necessarily the measured time.
    pub fn from_report(report: &ExecutionReport, duration_ms: u64) -> Self {
        ExecRecord {
            exit: report.exit,
            duration_ms,
            timed_out: report.timed_out,
            score: report.score,
            started_marker_seen: report.started_marker_seen,
            finished_marker_seen: report.finished_marker_seen,
            stdout_tail: crate::sandbox::tail_chars(&report.stdout, FEEDBACK_TAIL_CHARS),
            stderr_tail: crate::sandbox::tail_chars(&report.stderr, FEEDBACK_TAIL_CHARS),
        }
    }
}

/// Saved loop state at a round boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Completed optimization rounds (0 right after initialization).
    pub round: u64,
    pub n_top: usize,
    pub next_id: SolutionId,
    pub elapsed_ms: u64,
    pub rng: BTreeMap<Stream, u64>,
    pub retry_rng: u64,
    pub backend_cursor: Option<Value>,
    pub tree: KnowledgeTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRef {
    pub title: String,
    pub citation_count: u64,
}

/// One journal event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Record {
    RunStarted {
        header: Box<RunHeader>,
    },
    LiteratureSearch {
        query: String,
        papers: Vec<PaperRef>,
    },
    PaperSummary {
        rank: usize,
        summary: PaperSummary,
    },
    Tree {
        reason: String,
        tree: KnowledgeTree,
    },
    InitDescriptions {
        descriptions: Vec<String>,
    },
    LlmCall {
        asset: String,
        attempt: u32,
        chars: usize,
    },
    Action {
        round: u64,
        slot: usize,
        parent_id: SolutionId,
        kind: ActionKind,
        category: Option<String>,
        candidates: Vec<String>,
        instruction: String,
        prompt_asset: String,
    },
    Execution {
        round: u64,
        /// Id the resulting solution gets.
        solution_id: SolutionId,
        purpose: ExecPurpose,
        region_chars: usize,
        report: ExecRecord,
    },
    DiagnosticRun {
        round: u64,
        parent_id: SolutionId,
        report: Option<ExecRecord>,
        note: Option<String>,
    },
    Solution {
        solution: Solution,
    },
    Reward {
        round: u64,
        category: String,
        pi: BTreeMap<String, f64>,
    },
    Feedback {
        round: u64,
        /// Category name, or `None` for the diagnostic ledger.
        category: Option<String>,
        entry: FeedbackEntry,
    },
    Decay {
        round: u64,
        n_top: usize,
    },
    Note {
        message: String,
    },
    Checkpoint(Box<Checkpoint>),
    RunFinished {
        rounds: u64,
        best_id: SolutionId,
        best_score: f64,
        reason: String,
    },
}

impl Record {
    pub fn name(&self) -> &'static str {
        match self {
            Record::RunStarted { .. } => "run_started",
            Record::LiteratureSearch { .. } => "literature_search",
            Record::PaperSummary { .. } => "paper_summary",
            Record::Tree { .. } => "tree",
            Record::InitDescriptions { .. } => "init_descriptions",
            Record::LlmCall { .. } => "llm_call",
            Record::Action { .. } => "action",
            Record::Execution { .. } => "execution",
            Record::DiagnosticRun { .. } => "diagnostic_run",
            Record::Solution { .. } => "solution",
            Record::Reward { .. } => "reward",
            Record::Feedback { .. } => "feedback",
            Record::Decay { .. } => "decay",
            Record::Note { .. } => "note",
            Record::Checkpoint(_) => "checkpoint",
            Record::RunFinished { .. } => "run_finished",
        }
    }
}

/// A record with its run-time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub t_ms: u64,
    #[serde(flatten)]
    pub record: Record,
}

/// Line-delimited JSON writer. Appends are serialized by an internal lock.
pub struct Journal {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl Journal {
    /// Create (or truncate) a journal.
    pub fn create(path: &Path) -> Result<Self, JournalError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
        }
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        Ok(Journal { path: path.to_path_buf(), writer: Mutex::new(BufWriter::new(file)) })
    }

    /// Open an existing journal for appending after cutting it to `len` bytes.
    pub fn open_truncated(path: &Path, len: u64) -> Result<Self, JournalError> {
        let file = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
        file.set_len(len).map_err(|e| io_err(path, e))?;
        drop(file);
        let file = OpenOptions::new().append(true).open(path).map_err(|e| io_err(path, e))?;
        Ok(Journal { path: path.to_path_buf(), writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, t_ms: u64, record: &Record) -> Result<(), JournalError> {
        #[derive(Serialize)]
        struct Out<'a> {
            t_ms: u64,
            #[serde(flatten)]
            record: &'a Record,
        }
        let mut line = serde_json::to_string(&Out { t_ms, record })
            .map_err(|e| io_err(&self.path, std::io::Error::other(e)))?;
        line.push('\n');
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        w.write_all(line.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        w.flush().map_err(|e| io_err(&self.path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> JournalError {
    JournalError::Io { path: path.to_path_buf(), source }
}

/// Parsed journal contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JournalContents {
    pub entries: Vec<Entry>,
    /// Byte offset just past each entry's line.
    pub ends: Vec<u64>,
    /// The file ended in an incomplete line, which was ignored.
    pub truncated_tail: bool,
}

impl JournalContents {
    pub fn header(&self) -> Option<&RunHeader> {
        self.entries.iter().find_map(|e| match &e.record {
            Record::RunStarted { header } => Some(header.as_ref()),
            _ => None,
        })
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn is_finished(&self) -> bool {
        self.records().any(|r| matches!(r, Record::RunFinished { .. }))
    }

    /// Index of the last checkpoint record.
    pub fn last_checkpoint(&self) -> Option<usize> {
        self.entries.iter().rposition(|e| matches!(e.record, Record::Checkpoint(_)))
    }
}

/// Read a journal. A missing trailing newline marks a torn final record.
pub fn read(path: &Path) -> Result<JournalContents, JournalError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<JournalContents, JournalError> {
    let mut contents = JournalContents::default();
    let mut offset = 0usize;
    let mut index = 0usize;
    while offset < bytes.len() {
        let Some(rel) = bytes[offset..].iter().position(|b| *b == b'\n') else {
            contents.truncated_tail = true;
            break;
        };
        let line = &bytes[offset..offset + rel];
        offset += rel + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let entry: Entry = serde_json::from_slice(line)
            .map_err(|e| JournalError::Corrupt { index, reason: e.to_string() })?;
        contents.entries.push(entry);
        contents.ends.push(offset as u64);
        index += 1;
    }
    Ok(contents)
}
