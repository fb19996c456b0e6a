//! LLM access: prompt assets, tagged-output parsing, backends and the
//! retrying gateway.

pub mod backend;
pub mod gateway;
pub mod tags;
pub mod template;

pub use backend::{Backend, CompletionRequest, HttpBackend, Script, ScriptReply, ScriptedBackend};
pub use gateway::{Completion, Gateway, RetryPolicy};
pub use tags::{extract_pair_tagged, extract_tagged, Tag};
pub use template::{bindings, Bindings, PromptAsset, PromptLibrary, Role};

use crate::error::LlmError;

/// Anything that turns a named prompt asset plus bindings into a completion.
pub trait Llm: Sync {
    fn complete(&self, asset: &str, bindings: &Bindings) -> Result<Completion, LlmError>;
    fn library(&self) -> &PromptLibrary;
}

/// Pull editable-region code out of a model reply.
///
/// Prefers the first fenced code block; falls back to the whole reply. If the
/// reply contains the sentinel lines, only the text between them is kept, and
/// any remaining sentinel lines are dropped.
pub fn extract_code(reply: &str, sentinel_begin: &str, sentinel_end: &str) -> String {
    let body = fenced_block(reply).unwrap_or(reply);
    let lines: Vec<&str> = body.lines().collect();
    let is = |line: &str, s: &str| line.trim_end() == s;
    let begin = lines.iter().position(|l| is(l, sentinel_begin));
    let end = lines.iter().rposition(|l| is(l, sentinel_end));
    let slice = match (begin, end) {
        (Some(b), Some(e)) if b < e => &lines[b + 1..e],
        _ => &lines[..],
    };
    let kept: Vec<&str> = slice
        .iter()
        .copied()
        .filter(|l| !is(l, sentinel_begin) && !is(l, sentinel_end))
        .collect();
    let text = kept.join("\n");
    let trimmed = text.trim_matches('\n');
    trimmed.trim_end().to_string()
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}
