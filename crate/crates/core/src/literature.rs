//! Step 1: retrieve highly cited papers for the task and distill each into a
//! short bullet summary, refined with its methods excerpts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::LiteratureKind;
use crate::error::LlmError;
use crate::llm::{bindings, Llm};
use crate::net::{HttpRequest, HttpTransport};

/// Optional API key for the scholarly search service.
pub const SCHOLAR_KEY_ENV: &str = "TUSO_SCHOLAR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperMeta {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub citation_count: u64,
    #[serde(default)]
    pub methods_excerpts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub title: String,
    pub bullets: Vec<String>,
}

/// Where papers come from, as recorded in the run header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteratureSpec {
    pub kind: LiteratureKind,
    pub fixture: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub scholar_url: String,
}

pub trait LiteratureSource: Send + Sync {
    /// Raw hits in service order.
    fn search(&self, query: &str, limit: usize) -> Result<Vec<PaperMeta>, String>;
}

/// The search response shape (Semantic Scholar graph API), optionally
/// carrying `methods_excerpts` per paper in recorded fixtures.
#[derive(Debug, Deserialize)]
struct SearchResponse {
    #[serde(default)]
    data: Vec<RawPaper>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawPaper {
    #[serde(default)]
    title: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<String>,
    #[serde(default)]
    citation_count: Option<u64>,
    #[serde(default, rename = "methods_excerpts")]
    methods_excerpts: Vec<String>,
}

fn parse_response(body: &str) -> Result<Vec<PaperMeta>, String> {
    let resp: SearchResponse = serde_json::from_str(body).map_err(|e| format!("bad search response: {e}"))?;
    Ok(resp
        .data
        .into_iter()
        .map(|p| PaperMeta {
            title: p.title.unwrap_or_default(),
            abstract_text: p.abstract_text.unwrap_or_default(),
            citation_count: p.citation_count.unwrap_or(0),
            methods_excerpts: p.methods_excerpts,
        })
        .collect())
}

/// Replays a recorded search response.
pub struct FixtureSource {
    papers: Vec<PaperMeta>,
}

impl FixtureSource {
    pub fn load(path: &Path) -> Result<Self, String> {
        let body = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(FixtureSource { papers: parse_response(&body)? })
    }

    pub fn from_papers(papers: Vec<PaperMeta>) -> Self {
        FixtureSource { papers }
    }
}

impl LiteratureSource for FixtureSource {
    fn search(&self, _query: &str, _limit: usize) -> Result<Vec<PaperMeta>, String> {
        Ok(self.papers.clone())
    }
}

/// Live Semantic Scholar paper search.
pub struct SemanticScholarSource {
    transport: Arc<dyn HttpTransport>,
    base_url: String,
    api_key: Option<String>,
    record: Option<PathBuf>,
}

impl SemanticScholarSource {
    pub fn new(transport: Arc<dyn HttpTransport>, base_url: &str) -> Self {
        SemanticScholarSource {
            transport,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(SCHOLAR_KEY_ENV).ok().filter(|k| !k.is_empty()),
            record: None,
        }
    }

    /// Also write each response body to `path` for later fixture replay.
    pub fn recording_to(mut self, path: Option<PathBuf>) -> Self {
        self.record = path;
        self
    }
}

impl LiteratureSource for SemanticScholarSource {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<PaperMeta>, String> {
        let mut req = HttpRequest::get(format!("{}/paper/search", self.base_url))
            .query("query", query)
            .query("limit", limit.to_string())
            .query("fields", "title,abstract,citationCount");
        if let Some(key) = &self.api_key {
            req = req.header("x-api-key", key.clone());
        }
        let resp = self.transport.send(&req).map_err(|e| e.0)?;
        if resp.status != 200 {
            return Err(format!("search returned HTTP {}", resp.status));
        }
        if let Some(path) = &self.record {
            if let Err(e) = std::fs::write(path, &resp.body) {
                log::warn!("could not record search response to {}: {e}", path.display());
            }
        }
        parse_response(&resp.body)
    }
}

/// Build the configured source; `None` when retrieval is disabled.
pub fn make_source(
    spec: &LiteratureSpec,
    transport: Arc<dyn HttpTransport>,
) -> Result<Option<Box<dyn LiteratureSource>>, String> {
    Ok(match spec.kind {
        LiteratureKind::None => None,
        LiteratureKind::Fixture => {
            let path = spec.fixture.as_ref().ok_or("literature = \"fixture\" needs literature_fixture")?;
            Some(Box::new(FixtureSource::load(path)?))
        }
        LiteratureKind::SemanticScholar => Some(Box::new(
            SemanticScholarSource::new(transport, &spec.scholar_url).recording_to(spec.record.clone()),
        )),
    })
}

/// The task description with file-path-like tokens removed.
pub fn query_from_task(task: &str) -> String {
    task.split_whitespace()
        .filter(|tok| {
            let t = tok.trim_matches(|c: char| matches!(c, ',' | ';' | ':' | '(' | ')' | '"' | '\'' | '`'));
            let pathish = t.contains('/') || t.contains('\\') || t.starts_with('~');
            let file_ext = t
                .rsplit_once('.')
                .is_some_and(|(stem, ext)| !stem.is_empty() && (1..=5).contains(&ext.len()) && ext.chars().all(|c| c.is_ascii_alphanumeric()) && ext.chars().any(|c| c.is_ascii_alphabetic()));
            !(pathish || file_ext)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Search, drop hits without abstracts, and keep the `limit` most cited
/// (stable for ties). Failures degrade to no papers.
pub fn search_papers(source: &dyn LiteratureSource, query: &str, limit: usize) -> Vec<PaperMeta> {
    let request = (limit * 3).clamp(limit, 100);
    match source.search(query, request) {
        Ok(hits) => rank_papers(hits, limit),
        Err(e) => {
            log::warn!("paper search failed, continuing without papers: {e}");
            Vec::new()
        }
    }
}

pub fn rank_papers(hits: Vec<PaperMeta>, limit: usize) -> Vec<PaperMeta> {
    let mut papers: Vec<PaperMeta> = hits.into_iter().filter(|p| !p.abstract_text.trim().is_empty()).collect();
    papers.sort_by(|a, b| b.citation_count.cmp(&a.citation_count));
    papers.truncate(limit);
    papers
}

/// Bullet lines of a reply ("- ", "* ", "• ", "1. ", "1) "), markers removed.
pub fn parse_bullets(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|line| {
            let t = line.trim();
            let rest = if let Some(r) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")).or_else(|| t.strip_prefix("• ")) {
                r
            } else {
                let digits = t.chars().take_while(char::is_ascii_digit).count();
                let after = &t[digits..];
                if digits > 0 && (after.starts_with(". ") || after.starts_with(") ")) {
                    &after[2..]
                } else {
                    return None;
                }
            };
            let rest = rest.trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect()
}

fn first_sentence(text: &str) -> String {
    let t = text.trim();
    let end = t
        .char_indices()
        .find(|(i, c)| matches!(c, '.' | '!' | '?') && t[i + c.len_utf8()..].starts_with(char::is_whitespace))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(t.len());
    t[..end].to_string()
}

/// Keep at most `words` whitespace-separated words.
pub fn truncate_words(text: &str, words: usize) -> String {
    text.split_whitespace().take(words).collect::<Vec<_>>().join(" ")
}

/// Summarize a paper from its abstract alone.
pub fn summarize_abstract(llm: &dyn Llm, meta: &PaperMeta, max_bullets: usize) -> Result<PaperSummary, LlmError> {
    let reply = llm.complete("paper_summarize", &bindings([("abstract", meta.abstract_text.as_str())]))?;
    let mut bullets = parse_bullets(&reply.text);
    if bullets.is_empty() {
        bullets = vec![first_sentence(&meta.abstract_text)];
    }
    bullets.truncate(max_bullets.max(1));
    Ok(PaperSummary { title: meta.title.clone(), bullets })
}

/// Fold one methods excerpt into a summary. Identity for an empty excerpt or
/// an unparsable reply.
pub fn refine_summary(
    llm: &dyn Llm,
    summary: &PaperSummary,
    excerpt: &str,
    max_bullets: usize,
    max_words: usize,
) -> Result<PaperSummary, LlmError> {
    let excerpt = truncate_words(excerpt, max_words);
    if excerpt.is_empty() {
        return Ok(summary.clone());
    }
    let current = summary.bullets.iter().map(|b| format!("- {b}")).collect::<Vec<_>>().join("\n");
    let limit = max_bullets.max(1).to_string();
    let reply = llm.complete(
        "paper_refine",
        &bindings([("current_desc", current.as_str()), ("new_text", excerpt.as_str()), ("bp_limit", limit.as_str())]),
    )?;
    let mut bullets = parse_bullets(&reply.text);
    if bullets.is_empty() {
        return Ok(summary.clone());
    }
    bullets.truncate(max_bullets.max(1));
    Ok(PaperSummary { title: summary.title.clone(), bullets })
}
