//! Extraction of `<c>`, `<p>` and `<m>` spans from model replies.

use std::fmt;
use std::str::FromStr;

use crate::error::EmptyExtraction;

/// Tags the prompt assets ask models to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// Category name.
    C,
    /// Instruction ("by ...").
    P,
    /// Initial model description.
    M,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::C => "c",
            Tag::P => "p",
            Tag::M => "m",
        }
    }

    fn open(self) -> &'static str {
        match self {
            Tag::C => "<c>",
            Tag::P => "<p>",
            Tag::M => "<m>",
        }
    }

    fn close(self) -> &'static str {
        match self {
            Tag::C => "</c>",
            Tag::P => "</p>",
            Tag::M => "</m>",
        }
    }

    pub fn wrap(self, inner: &str) -> String {
        format!("{}{}{}", self.open(), inner, self.close())
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" => Ok(Tag::C),
            "p" => Ok(Tag::P),
            "m" => Ok(Tag::M),
            other => Err(format!("unsupported tag `{other}`")),
        }
    }
}

/// A well-formed span found in the text, in order of appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Span<'a> {
    tag: Tag,
    inner: &'a str,
}

/// Scan `text` for well-formed spans of any of `tags`.
///
/// An opening tag that is followed by another opening tag (of any scanned
/// kind) before its own closing tag is malformed and skipped. Spans whose
/// trimmed content is empty are dropped.
fn spans<'a>(text: &'a str, tags: &[Tag]) -> Vec<Span<'a>> {
    let mut out = Vec::new();
    let mut cursor = 0;
    while cursor < text.len() {
        let rest = &text[cursor..];
        let Some((at, tag)) = tags
            .iter()
            .filter_map(|t| rest.find(t.open()).map(|i| (i, *t)))
            .min_by_key(|(i, _)| *i)
        else {
            break;
        };
        let body_start = cursor + at + tag.open().len();
        let body = &text[body_start..];
        let close = body.find(tag.close());
        let next_open = tags.iter().filter_map(|t| body.find(t.open())).min();
        match (close, next_open) {
            (Some(c), Some(o)) if o < c => {
                cursor = body_start + o;
            }
            (Some(c), _) => {
                let inner = body[..c].trim();
                if !inner.is_empty() {
                    out.push(Span { tag, inner });
                }
                cursor = body_start + c + tag.close().len();
            }
            (None, Some(o)) => cursor = body_start + o,
            (None, None) => break,
        }
    }
    out
}

/// Inner texts of every well-formed `<tag>…</tag>` span, in order.
pub fn extract_tagged(text: &str, tag: Tag) -> Result<Vec<String>, EmptyExtraction> {
    let found: Vec<String> = spans(text, &[tag]).into_iter().map(|s| s.inner.to_string()).collect();
    if found.is_empty() {
        return Err(EmptyExtraction { tag: tag.name().to_string() });
    }
    Ok(found)
}

/// Adjacent `<c>…</c><p>…</p>` pairs, in order. Orphan tags are dropped.
pub fn extract_pair_tagged(text: &str) -> Vec<(String, String)> {
    let all = spans(text, &[Tag::C, Tag::P]);
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < all.len() {
        if all[i].tag == Tag::C && all.get(i + 1).is_some_and(|n| n.tag == Tag::P) {
            pairs.push((all[i].inner.to_string(), all[i + 1].inner.to_string()));
            i += 2;
        } else {
            i += 1;
        }
    }
    pairs
}
