//! Run configuration and the on-disk config file.
//!
//! The config file is a small TOML document with two tables, `[run]` and
//! `[backend]`. Unknown keys are rejected. Secrets never live here: the HTTP
//! backend reads its bearer token from `TUSO_API_KEY`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Component switches used for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Collapse every category into one.
    pub no_categories: bool,
    /// Freeze category utilities at their initial values.
    pub no_bayesian: bool,
    /// Never take a diagnostic action.
    pub no_diagnosis: bool,
    /// Skip literature and knowledge building; optimize with the generic instruction.
    pub no_knowledge: bool,
}

impl Ablation {
    pub const NAMES: [&'static str; 4] = ["no_categories", "no_bayesian", "no_diagnosis", "no_knowledge"];

    /// Switch on the ablation with the given name.
    pub fn enable(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "no_categories" => self.no_categories = true,
            "no_bayesian" => self.no_bayesian = true,
            "no_diagnosis" => self.no_diagnosis = true,
            "no_knowledge" => self.no_knowledge = true,
            other => return Err(ConfigError::UnknownAblation(other.to_string())),
        }
        Ok(())
    }

    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, ConfigError> {
        let mut ablation = Ablation::default();
        for name in names {
            ablation.enable(name)?;
        }
        Ok(ablation)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let flags = [self.no_categories, self.no_bayesian, self.no_diagnosis, self.no_knowledge];
        Self::NAMES
            .iter()
            .zip(flags)
            .filter_map(|(name, on)| on.then_some(*name))
            .collect()
    }
}

/// How elapsed time is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    /// Real wall-clock time (LLM latency plus sandbox time).
    #[default]
    Wall,
    /// Fixed ticks per LLM call and execution; makes journals reproducible.
    Logical,
}

impl FromStr for ClockKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wall" => Ok(ClockKind::Wall),
            "logical" => Ok(ClockKind::Logical),
            other => Err(ConfigError::Invalid(format!("unknown clock `{other}`"))),
        }
    }
}

/// Parameters of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub budget_seconds: u64,
    pub alpha: f64,
    pub attempt_limit_seconds: u64,
    pub init_repair_attempts: u32,
    pub optim_repair_attempts: u32,
    pub feedback_window: usize,
    pub instruction_draw: usize,
    pub reward_factor: f64,
    pub within_best_band: f64,
    pub decay_period_rounds: u64,
    pub seed: u64,
    pub ablation: Ablation,
    pub max_parallel_evals: usize,
    /// Optional hard cap on optimization rounds.
    pub max_rounds: Option<u64>,
    pub clock: ClockKind,
    pub num_categories: usize,
    pub num_initializations: usize,
    pub instructions_per_draft: usize,
    pub instructions_per_summary: usize,
    pub max_papers: usize,
    pub summary_bullets: usize,
    pub excerpt_words: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget_seconds: 28_800,
            alpha: 0.8,
            attempt_limit_seconds: 600,
            init_repair_attempts: 4,
            optim_repair_attempts: 2,
            feedback_window: 5,
            instruction_draw: 3,
            reward_factor: 1.1,
            within_best_band: 0.001,
            decay_period_rounds: 2,
            seed: 0,
            ablation: Ablation::default(),
            max_parallel_evals: 1,
            max_rounds: None,
            clock: ClockKind::Wall,
            num_categories: 10,
            num_initializations: 5,
            instructions_per_draft: 10,
            instructions_per_summary: 10,
            max_papers: 10,
            summary_bullets: 15,
            excerpt_words: 1200,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return invalid("alpha must lie in [0, 1]");
        }
        if !(self.reward_factor > 1.0 && self.reward_factor.is_finite()) {
            return invalid("reward_factor must be a finite value > 1");
        }
        if !(self.within_best_band > 0.0 && self.within_best_band.is_finite()) {
            return invalid("within_best_band must be > 0");
        }
        let counts = [
            ("attempt_limit_seconds", self.attempt_limit_seconds as usize),
            ("init_repair_attempts", self.init_repair_attempts as usize),
            ("optim_repair_attempts", self.optim_repair_attempts as usize),
            ("feedback_window", self.feedback_window),
            ("instruction_draw", self.instruction_draw),
            ("decay_period_rounds", self.decay_period_rounds as usize),
            ("max_parallel_evals", self.max_parallel_evals),
            ("num_categories", self.num_categories),
            ("num_initializations", self.num_initializations),
            ("instructions_per_draft", self.instructions_per_draft),
            ("instructions_per_summary", self.instructions_per_summary),
            ("max_papers", self.max_papers),
            ("summary_bullets", self.summary_bullets),
            ("excerpt_words", self.excerpt_words),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
        }
        Ok(())
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs(self.budget_seconds)
    }

    pub fn attempt_limit(&self) -> Duration {
        Duration::from_secs(self.attempt_limit_seconds)
    }
}

/// Which LLM backend serves completions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

/// The `[backend]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub base_url: String,
    /// Scripted-reply file, required when `kind = "scripted"`.
    pub script: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub max_response_chars: usize,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
    pub request_timeout_seconds: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            model: "gpt-4o-mini".to_string(),
            base_url: "https://api.openai.com/v1".to_string(),
            script: None,
            temperature: None,
            max_response_chars: 65_536,
            retry_attempts: 3,
            retry_base_ms: 500,
            request_timeout_seconds: 120,
        }
    }
}

/// Where Step 1 papers come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiteratureKind {
    /// No retrieval; knowledge is drafted from the task description alone.
    None,
    /// Replay a recorded search response from disk.
    Fixture,
    /// Query the Semantic Scholar graph API.
    #[default]
    SemanticScholar,
}

/// The `[run]` table: engine parameters plus file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(flatten)]
    pub params: RunConfig,
    pub bundle: PathBuf,
    pub journal: PathBuf,
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub warm_start: Option<PathBuf>,
    #[serde(default)]
    pub scratch_dir: Option<PathBuf>,
    #[serde(default)]
    pub literature: LiteratureKind,
    #[serde(default)]
    pub literature_fixture: Option<PathBuf>,
    #[serde(default)]
    pub literature_record: Option<PathBuf>,
    #[serde(default = "default_scholar_url")]
    pub scholar_url: String,
}

fn default_scholar_url() -> String {
    "https://api.semanticscholar.org/graph/v1".to_string()
}

/// A parsed config file. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    #[serde(default)]
    pub backend: BackendConfig,
}

// `flatten` and `deny_unknown_fields` do not combine in serde, so `[run]` keys
// are checked by hand against this list.
const RUN_KEYS: &[&str] = &[
    "budget_seconds",
    "alpha",
    "attempt_limit_seconds",
    "init_repair_attempts",
    "optim_repair_attempts",
    "feedback_window",
    "instruction_draw",
    "reward_factor",
    "within_best_band",
    "decay_period_rounds",
    "seed",
    "ablation",
    "max_parallel_evals",
    "max_rounds",
    "clock",
    "num_categories",
    "num_initializations",
    "instructions_per_draft",
    "instructions_per_summary",
    "max_papers",
    "summary_bullets",
    "excerpt_words",
    "bundle",
    "journal",
    "prompts",
    "warm_start",
    "scratch_dir",
    "literature",
    "literature_fixture",
    "literature_record",
    "scholar_url",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ConfigError::Parse { reason, .. } => ConfigError::Parse { path: path.to_path_buf(), reason },
            other => other,
        })
    }

    /// Parse config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let parse_err = |reason: String| ConfigError::Parse { path: PathBuf::new(), reason };
        let mut value: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;

        for key in value.keys() {
            if key != "run" && key != "backend" {
                return Err(parse_err(format!("unknown table `{key}`")));
            }
        }
        let run = value
            .get_mut("run")
            .and_then(|v| v.as_table_mut())
            .ok_or_else(|| parse_err("missing [run] table".to_string()))?;
        for key in run.keys() {
            if !RUN_KEYS.contains(&key.as_str()) {
                return Err(parse_err(format!("unknown key `run.{key}`")));
            }
        }
        // `ablation` is written as a list of names in the file.
        if let Some(list) = run.remove("ablation") {
            let names = list
                .as_array()
                .ok_or_else(|| parse_err("run.ablation must be a list of names".to_string()))?
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| parse_err("run.ablation entries must be strings".to_string()))?;
            let ablation = Ablation::from_names(names.iter().map(String::as_str))?;
            let table = toml::Value::try_from(ablation).map_err(|e| parse_err(e.to_string()))?;
            run.insert("ablation".to_string(), table);
        }

        let mut config: ConfigFile =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        config.run.params.validate()?;
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run.bundle);
        fix(&mut self.run.journal);
        for p in [
            &mut self.run.prompts,
            &mut self.run.warm_start,
            &mut self.run.scratch_dir,
            &mut self.run.literature_fixture,
            &mut self.run.literature_record,
            &mut self.backend.script,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// One row of the documented config-key table.
pub struct KeyDoc {
    pub key: &'static str,
    pub default: String,
    pub help: &'static str,
}

/// Every config key with its default, for `--help` and the README.
pub fn documented_keys() -> Vec<KeyDoc> {
    let r = RunConfig::default();
    let b = BackendConfig::default();
    let k = |key, default: &dyn fmt::Display, help| KeyDoc { key, default: default.to_string(), help };
    vec![
        k("run.bundle", &"(required)", "task bundle manifest (bundle.toml)"),
        k("run.journal", &"(required)", "append-only run journal (JSON lines)"),
        k("run.budget_seconds", &r.budget_seconds, "wall-clock optimization budget"),
        k("run.alpha", &r.alpha, "probability of instruction-based (vs diagnostic) optimization"),
        k("run.attempt_limit_seconds", &r.attempt_limit_seconds, "per-attempt execution limit"),
        k("run.init_repair_attempts", &r.init_repair_attempts, "bug-fix attempts per initial solution"),
        k("run.optim_repair_attempts", &r.optim_repair_attempts, "bug-fix attempts per optimization"),
        k("run.feedback_window", &r.feedback_window, "recent feedback entries shown to the optimizer"),
        k("run.instruction_draw", &r.instruction_draw, "candidate instructions drawn per action"),
        k("run.reward_factor", &r.reward_factor, "multiplier applied to an improving category"),
        k("run.within_best_band", &r.within_best_band, "relative band for shortest-solution selection"),
        k("run.decay_period_rounds", &r.decay_period_rounds, "rounds between N_top decrements"),
        k("run.seed", &r.seed, "root seed for all random streams"),
        k("run.ablation", &"[]", "any of no_categories, no_bayesian, no_diagnosis, no_knowledge"),
        k("run.max_parallel_evals", &r.max_parallel_evals, "concurrent sandbox executions per round"),
        k("run.max_rounds", &"(none)", "optional cap on optimization rounds"),
        k("run.clock", &"wall", "wall | logical (fixed ticks, reproducible journals)"),
        k("run.num_categories", &r.num_categories, "categories requested in the draft pass"),
        k("run.num_initializations", &r.num_initializations, "initial solution descriptions drafted"),
        k("run.instructions_per_draft", &r.instructions_per_draft, "instructions drafted per category"),
        k("run.instructions_per_summary", &r.instructions_per_summary, "instructions added per paper summary"),
        k("run.max_papers", &r.max_papers, "papers retrieved for Step 1"),
        k("run.summary_bullets", &r.summary_bullets, "bullet cap per paper summary"),
        k("run.excerpt_words", &r.excerpt_words, "word cap per methods excerpt"),
        k("run.prompts", &"(bundled assets)", "prompt asset directory"),
        k("run.warm_start", &"(none)", "file holding initial editable-region code"),
        k("run.scratch_dir", &"<journal>.scratch", "per-execution scratch root"),
        k("run.literature", &"semantic_scholar", "semantic_scholar | fixture | none"),
        k("run.literature_fixture", &"(none)", "recorded search response for literature = fixture"),
        k("run.literature_record", &"(none)", "write live search responses here for later replay"),
        k("run.scholar_url", &default_scholar_url(), "scholarly search API base URL"),
        k("backend.kind", &"http", "http | scripted"),
        k("backend.model", &b.model, "chat-completion model name"),
        k("backend.base_url", &b.base_url, "chat-completion API base URL"),
        k("backend.script", &"(none)", "scripted reply file (kind = scripted)"),
        k("backend.temperature", &"(unset)", "sampling temperature sent to the backend"),
        k("backend.max_response_chars", &b.max_response_chars, "responses truncated to this many chars"),
        k("backend.retry_attempts", &b.retry_attempts, "attempts per completion"),
        k("backend.retry_base_ms", &b.retry_base_ms, "base delay for exponential backoff"),
        k("backend.request_timeout_seconds", &b.request_timeout_seconds, "HTTP request timeout"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
bundle = "b/bundle.toml"
journal = "run.jsonl"
seed = 7
ablation = ["no_diagnosis", "no_bayesian"]

[backend]
kind = "scripted"
script = "script.json"
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = ConfigFile::parse(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.run.params.seed, 7);
        assert_eq!(cfg.run.params.alpha, 0.8);
        assert_eq!(cfg.run.params.budget_seconds, 28_800);
        assert!(cfg.run.params.ablation.no_diagnosis);
        assert!(cfg.run.params.ablation.no_bayesian);
        assert!(!cfg.run.params.ablation.no_knowledge);
        assert_eq!(cfg.run.bundle, PathBuf::from("/base/b/bundle.toml"));
        assert_eq!(cfg.backend.kind, BackendKind::Scripted);
        assert_eq!(cfg.backend.script, Some(PathBuf::from("/base/script.json")));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nmystery = 1");
        let err = ConfigFile::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("run.mystery"), "{err}");

        let text = format!("{MINIMAL}\nextra = 1\n");
        assert!(ConfigFile::parse(&text, Path::new(".")).is_err());

        let text = MINIMAL.replace("[backend]", "[backend]\nsecret = \"x\"");
        assert!(ConfigFile::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nalpha = 1.5");
        assert!(ConfigFile::parse(&text, Path::new(".")).is_err());
        let text = MINIMAL.replace("seed = 7", "seed = 7\nreward_factor = 1.0");
        assert!(ConfigFile::parse(&text, Path::new(".")).is_err());
        let text = MINIMAL.replace("\"no_bayesian\"", "\"no_everything\"");
        assert!(matches!(
            ConfigFile::parse(&text, Path::new(".")),
            Err(ConfigError::UnknownAblation(_))
        ));
    }

    #[test]
    fn ablation_names_round_trip() {
        let a = Ablation::from_names(["no_knowledge", "no_categories"]).unwrap();
        assert_eq!(a.names(), vec!["no_categories", "no_knowledge"]);
    }

    #[test]
    fn documented_keys_cover_every_run_key() {
        let docs = documented_keys();
        for key in RUN_KEYS {
            let full = format!("run.{key}");
            assert!(docs.iter().any(|d| d.key == full), "{full} undocumented");
        }
    }
}
