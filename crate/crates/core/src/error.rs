//! Error types shared across the engine.
//!
//! Each subsystem has its own error enum; [`Error`] is the top-level type
//! returned by the engine and mapped onto CLI exit codes.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Problems with a task bundle or with splicing code into its template.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("SentinelMissing: {0} sentinel line not found in template")]
    SentinelMissing(&'static str),
    #[error("SentinelDuplicated: {0} sentinel line occurs more than once")]
    SentinelDuplicated(&'static str),
    #[error("SentinelOrder: begin sentinel must precede end sentinel")]
    SentinelOrder,
    #[error("EmptyRegion: editable region code is empty")]
    EmptyRegion,
    #[error("RegionContainsSentinel: region code contains a sentinel line")]
    RegionContainsSentinel,
    #[error("EmptyRunCommand: run_command must name a program")]
    EmptyRunCommand,
    #[error("SpawnFailure: command `{0}` cannot be resolved")]
    CommandNotFound(String),
    #[error("BundleManifest: {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("BundleIo: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Failures launching a candidate program.
#[derive(Debug, Error)]
pub enum ExecError {
    #[error("SpawnFailure: could not start `{command}`: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("scratch directory error: {0}")]
    Scratch(#[source] io::Error),
}

/// Errors surfaced by the LLM gateway.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("BackendUnavailable: gave up after {attempts} attempts: {last}")]
    BackendUnavailable { attempts: u32, last: String },
    #[error("TemplateBindingMissing: asset `{asset}` needs placeholder `{placeholder}`")]
    TemplateBindingMissing { asset: String, placeholder: String },
    #[error("unknown prompt asset `{0}`")]
    UnknownAsset(String),
    #[error("prompt asset `{asset}` does not reference required placeholder `{placeholder}`")]
    AssetPlaceholderMissing { asset: String, placeholder: String },
    #[error("prompt assets: {path}: {reason}")]
    AssetLoad { path: PathBuf, reason: String },
    #[error("script: {0}")]
    Script(String),
}

/// A transport-level failure (network, HTTP status, exhausted script).
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// No tagged span was found in an LLM reply.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("EmptyExtraction: no <{tag}> spans found")]
pub struct EmptyExtraction {
    pub tag: String,
}

/// Errors from the solution pool.
#[derive(Debug, Error)]
pub enum PoolError {
    #[error("DuplicateId: solution {0} already in pool")]
    DuplicateId(u64),
    #[error("NoSelectable: pool has no successfully evaluated solution")]
    NoSelectable,
    #[error(transparent)]
    Journal(#[from] JournalError),
}

/// Errors reading or writing the append-only journal.
#[derive(Debug, Error)]
pub enum JournalError {
    #[error("CorruptJournal: record {index}: {reason}")]
    Corrupt { index: usize, reason: String },
    #[error("journal {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("journal {0} has no run_started record")]
    MissingHeader(PathBuf),
}

/// Configuration file problems.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown ablation `{0}` (expected no_categories, no_bayesian, no_diagnosis or no_knowledge)")]
    UnknownAblation(String),
    #[error("config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Top-level engine error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("AllInitializationsFailed: no initial solution produced a score")]
    AllInitializationsFailed,
    #[error("BundleInvalid: {0}")]
    BundleInvalid(#[from] BundleError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True when the run failed because the LLM backend could not be reached.
    pub fn is_backend_unavailable(&self) -> bool {
        matches!(self, Error::Llm(LlmError::BackendUnavailable { .. }))
    }

    /// Stable process exit code for this error:
    /// 1 no initial solution scored, 2 invalid bundle/config/prompt assets,
    /// 3 LLM backend unavailable, 4 corrupt or unusable journal, 5 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AllInitializationsFailed => 1,
            Error::BundleInvalid(_) | Error::Config(_) => 2,
            Error::Exec(ExecError::Bundle(_) | ExecError::SpawnFailure { .. }) => 2,
            Error::Llm(LlmError::BackendUnavailable { .. }) => 3,
            Error::Llm(_) => 2,
            Error::Journal(JournalError::Corrupt { .. } | JournalError::MissingHeader(_))
            | Error::Pool(PoolError::Journal(JournalError::Corrupt { .. })) => 4,
            _ => 5,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
