//! Turning a config file (or a journal header) into the pieces a run needs.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::config::{BackendKind, ConfigFile, LiteratureKind};
use crate::error::{ConfigError, Error, LlmError, Result};
use crate::journal::RunHeader;
use crate::literature::{make_source, LiteratureSource, LiteratureSpec};
use crate::llm::{Backend, Gateway, HttpBackend, PromptLibrary, RetryPolicy, Script, ScriptedBackend};
use crate::net::{HttpTransport, UreqTransport};
use crate::sandbox::TaskBundle;

/// Process-level options that are not part of the journaled run definition.
#[derive(Clone)]
pub struct RunOptions {
    pub journal: PathBuf,
    /// Root for per-execution scratch directories.
    pub scratch_dir: PathBuf,
    /// Transport for HTTP backends and live literature search.
    pub transport: Arc<dyn HttpTransport>,
    /// Use this backend instead of the one described by the header.
    pub backend: Option<Arc<dyn Backend>>,
    /// Return after this many completed rounds without finishing the run
    /// (simulates an interruption; the journal stays resumable).
    pub stop_after_round: Option<u64>,
}

impl RunOptions {
    pub fn new(journal: impl Into<PathBuf>) -> Self {
        let journal = journal.into();
        RunOptions {
            scratch_dir: default_scratch(&journal),
            journal,
            transport: Arc::new(UreqTransport::new(Duration::from_secs(120))),
            backend: None,
            stop_after_round: None,
        }
    }

    pub fn with_transport(mut self, transport: Arc<dyn HttpTransport>) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_backend(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_dir = dir.into();
        self
    }

    pub fn stop_after(mut self, round: Option<u64>) -> Self {
        self.stop_after_round = round;
        self
    }
}

/// `<journal>.scratch` next to the journal.
pub fn default_scratch(journal: &Path) -> PathBuf {
    let mut name = journal.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".scratch");
    journal.with_file_name(name)
}

/// Build and validate the run definition described by a config file.
pub fn header_from_config(cfg: &ConfigFile) -> Result<RunHeader> {
    cfg.run.params.validate()?;
    let bundle = TaskBundle::load(&cfg.run.bundle)?;
    bundle.validate()?;
    let warm_start = match &cfg.run.warm_start {
        Some(path) => {
            let code = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            let code = code.trim_end_matches('\n').to_string();
            bundle.splice(&code)?;
            Some(code)
        }
        None => None,
    };
    if cfg.backend.kind == BackendKind::Scripted && cfg.backend.script.is_none() {
        return Err(ConfigError::Invalid("backend.kind = \"scripted\" needs backend.script".into()).into());
    }
    if cfg.run.literature == LiteratureKind::Fixture && cfg.run.literature_fixture.is_none() {
        return Err(ConfigError::Invalid("run.literature = \"fixture\" needs run.literature_fixture".into()).into());
    }
    let header = RunHeader {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.run.params.clone(),
        bundle,
        warm_start,
        backend: cfg.backend.clone(),
        literature: LiteratureSpec {
            kind: cfg.run.literature,
            fixture: cfg.run.literature_fixture.clone(),
            record: cfg.run.literature_record.clone(),
            scholar_url: cfg.run.scholar_url.clone(),
        },
        prompts: cfg.run.prompts.clone(),
    };
    load_library(&header)?;
    Ok(header)
}

/// Run options for a config file: journal and scratch locations from `[run]`.
pub fn options_from_config(cfg: &ConfigFile) -> RunOptions {
    let timeout = Duration::from_secs(cfg.backend.request_timeout_seconds.max(1));
    let mut opts = RunOptions::new(&cfg.run.journal).with_transport(Arc::new(UreqTransport::new(timeout)));
    if let Some(dir) = &cfg.run.scratch_dir {
        opts.scratch_dir = dir.clone();
    }
    opts
}

pub(crate) fn load_library(header: &RunHeader) -> Result<PromptLibrary, LlmError> {
    let dir = header.prompts.clone().unwrap_or_else(PromptLibrary::bundled_dir);
    PromptLibrary::load(&dir)
}

pub(crate) fn make_backend(header: &RunHeader, opts: &RunOptions) -> Result<Arc<dyn Backend>> {
    if let Some(b) = &opts.backend {
        return Ok(b.clone());
    }
    let b = &header.backend;
    Ok(match b.kind {
        BackendKind::Scripted => {
            let path = b.script.as_ref().ok_or_else(|| ConfigError::Invalid("scripted backend needs a script".into()))?;
            Arc::new(ScriptedBackend::new(Script::load(path)?))
        }
        BackendKind::Http => Arc::new(HttpBackend::new(opts.transport.clone(), &b.base_url, &b.model, b.temperature)),
    })
}

pub(crate) fn make_gateway(header: &RunHeader, opts: &RunOptions) -> Result<Gateway> {
    let library = load_library(header)?;
    let backend = make_backend(header, opts)?;
    let policy = RetryPolicy {
        attempts: header.backend.retry_attempts.max(1),
        base_delay: Duration::from_millis(header.backend.retry_base_ms),
        ..RetryPolicy::default()
    };
    Ok(Gateway::new(backend, library, policy, header.config.seed).with_max_response_chars(header.backend.max_response_chars))
}

pub(crate) fn make_literature(header: &RunHeader, opts: &RunOptions) -> Result<Option<Box<dyn LiteratureSource>>> {
    make_source(&header.literature, opts.transport.clone()).map_err(|e| Error::Config(ConfigError::Invalid(e)))
}
