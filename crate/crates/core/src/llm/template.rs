//! Prompt assets: editable text templates with `{name}` placeholders.
//!
//! Assets live on disk next to a `manifest.toml` that maps each asset name to
//! its file and agent role. `{{` and `}}` render as literal braces; a `{` that
//! does not start an identifier followed by `}` is left as is, so JSON or code
//! in a prompt needs no escaping.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::LlmError;

/// Which agent an asset instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    PaperSummarizer,
    CategoryBuilder,
    InstructionBuilder,
    Initializer,
    Optimizer,
    Diagnostician,
    FeedbackWriter,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::PaperSummarizer => "paper_summarizer",
            Role::CategoryBuilder => "category_builder",
            Role::InstructionBuilder => "instruction_builder",
            Role::Initializer => "initializer",
            Role::Optimizer => "optimizer",
            Role::Diagnostician => "diagnostician",
            Role::FeedbackWriter => "feedback_writer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown role `{s}`"))
    }
}

/// Placeholder bindings for one render.
pub type Bindings = BTreeMap<String, String>;

/// Build [`Bindings`] from literal pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

/// One prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAsset {
    pub name: String,
    pub role: Role,
    pub body: String,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    let bytes = body.as_bytes();
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                pieces.push(Piece::Text(&body[text_start..i + 1]));
                i += 2;
                text_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                pieces.push(Piece::Text(&body[text_start..i + 1]));
                i += 2;
                text_start = i;
            }
            b'{' => match body[i + 1..].find('}') {
                Some(len) if is_ident(&body[i + 1..i + 1 + len]) => {
                    pieces.push(Piece::Text(&body[text_start..i]));
                    pieces.push(Piece::Slot(&body[i + 1..i + 1 + len]));
                    i += len + 2;
                    text_start = i;
                }
                _ => i += 1,
            },
            _ => i += 1,
        }
    }
    pieces.push(Piece::Text(&body[text_start..]));
    pieces
}

impl PromptAsset {
    pub fn new(name: impl Into<String>, role: Role, body: impl Into<String>) -> Self {
        PromptAsset { name: name.into(), role, body: body.into() }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for piece in parse(&self.body) {
            if let Piece::Slot(name) = piece {
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
        }
        seen
    }

    /// Substitute every placeholder. Extra bindings are ignored.
    pub fn render(&self, bindings: &Bindings) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in parse(&self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings.get(name).ok_or_else(|| LlmError::TemplateBindingMissing {
                        asset: self.name.clone(),
                        placeholder: name.to_string(),
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// Placeholders the engine binds for each asset it uses. Loading fails if an
/// asset body does not reference one of them.
pub const REQUIRED_ASSETS: &[(&str, &[&str])] = &[
    ("paper_summarize", &["abstract"]),
    ("paper_refine", &["current_desc", "new_text", "bp_limit"]),
    ("category_draft", &["task_description", "num_cat", "data_available"]),
    ("category_refine", &["task_description", "current", "title", "bullet_points"]),
    ("instruction_draft", &["task_description", "category", "to_generate"]),
    ("instruction_refine", &["task_description", "summary", "n_new_max", "categories_line"]),
    ("initializer_draft", &["task_description", "num_init", "data_available"]),
    ("initializer_refine", &["task_description", "current", "title", "bullet_points"]),
    ("implement", &["task_description", "description", "template"]),
    ("repair", &["code", "stdout", "stderr", "template"]),
    ("instruction_select", &["code", "candidates"]),
    ("optimize", &["code", "instruction", "feedback", "template"]),
    ("generic_optimize", &["code", "template"]),
    ("diagnostic_instrument", &["code", "instruction", "template"]),
    ("diagnostic_improve", &["code", "logs", "feedback", "template"]),
    ("feedback", &["parent_code", "child_code", "parent_score", "child_score"]),
];

/// Plain-text list assets (one entry per non-empty line).
pub const REQUIRED_LISTS: &[&str] = &[
    "generic_categories",
    "generic_instructions",
    "diagnostic_instructions",
    "classification_categories",
    "instruction_examples",
    "initialization_examples",
];

/// Text assets used verbatim.
pub const REQUIRED_TEXTS: &[&str] = &["generic_instruction"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    asset: Vec<ManifestAsset>,
    #[serde(default)]
    list: Vec<ManifestFile>,
    #[serde(default)]
    text: Vec<ManifestFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestAsset {
    name: String,
    role: Role,
    file: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    name: String,
    file: PathBuf,
}

/// All prompt templates and text/list assets for a run.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    assets: BTreeMap<String, PromptAsset>,
    lists: BTreeMap<String, Vec<String>>,
    texts: BTreeMap<String, String>,
}

impl PromptLibrary {
    /// The asset directory shipped with this crate.
    pub fn bundled_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("prompts")
    }

    /// Load `dir/manifest.toml` and every file it names, then check that each
    /// engine-required asset exists and references its placeholders.
    pub fn load(dir: &Path) -> Result<Self, LlmError> {
        let manifest_path = dir.join("manifest.toml");
        let load_err = |path: &Path, reason: String| LlmError::AssetLoad { path: path.to_path_buf(), reason };
        let read = |file: &Path| {
            let path = dir.join(file);
            std::fs::read_to_string(&path).map_err(|e| load_err(&path, e.to_string()))
        };
        let manifest: Manifest = toml::from_str(&read(Path::new("manifest.toml"))?)
            .map_err(|e| load_err(&manifest_path, e.to_string()))?;

        let mut library = PromptLibrary::default();
        for entry in manifest.asset {
            let body = read(&entry.file)?;
            library.insert(PromptAsset::new(entry.name, entry.role, body));
        }
        for entry in manifest.list {
            let items = read(&entry.file)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect();
            library.lists.insert(entry.name, items);
        }
        for entry in manifest.text {
            library.texts.insert(entry.name, read(&entry.file)?.trim().to_string());
        }
        library.check()?;
        Ok(library)
    }

    pub fn insert(&mut self, asset: PromptAsset) {
        self.assets.insert(asset.name.clone(), asset);
    }

    pub fn insert_list(&mut self, name: &str, items: Vec<String>) {
        self.lists.insert(name.to_string(), items);
    }

    pub fn insert_text(&mut self, name: &str, text: &str) {
        self.texts.insert(name.to_string(), text.to_string());
    }

    /// Verify the library has everything the engine uses.
    pub fn check(&self) -> Result<(), LlmError> {
        for (name, required) in REQUIRED_ASSETS {
            let asset = self.asset(name)?;
            let present = asset.placeholders();
            for placeholder in *required {
                if !present.contains(placeholder) {
                    return Err(LlmError::AssetPlaceholderMissing {
                        asset: name.to_string(),
                        placeholder: placeholder.to_string(),
                    });
                }
            }
        }
        for name in REQUIRED_LISTS {
            if self.lists.get(*name).is_none_or(|l| l.is_empty()) {
                return Err(LlmError::UnknownAsset(name.to_string()));
            }
        }
        for name in REQUIRED_TEXTS {
            if self.texts.get(*name).is_none_or(|t| t.is_empty()) {
                return Err(LlmError::UnknownAsset(name.to_string()));
            }
        }
        Ok(())
    }

    pub fn asset(&self, name: &str) -> Result<&PromptAsset, LlmError> {
        self.assets.get(name).ok_or_else(|| LlmError::UnknownAsset(name.to_string()))
    }

    pub fn list(&self, name: &str) -> &[String] {
        self.lists.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn text(&self, name: &str) -> &str {
        self.texts.get(name).map(String::as_str).unwrap_or("")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_placeholders() {
        let asset = PromptAsset::new("t", Role::Optimizer, "Task: {task_description}\nCode:\n{code}\n");
        let out = asset.render(&bindings([("task_description", "denoise"), ("code", "x = 1")])).unwrap();
        assert_eq!(out, "Task: denoise\nCode:\nx = 1\n");
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let asset = PromptAsset::new("draft", Role::CategoryBuilder, "for {task_description}");
        match asset.render(&Bindings::new()) {
            Err(LlmError::TemplateBindingMissing { asset, placeholder }) => {
                assert_eq!(asset, "draft");
                assert_eq!(placeholder, "task_description");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn literal_braces_survive() {
        let asset = PromptAsset::new("t", Role::Optimizer, "{{x}} {\"k\": 1} f(x) {  } {name}");
        assert_eq!(asset.placeholders(), vec!["name"]);
        let out = asset.render(&bindings([("name", "v")])).unwrap();
        assert_eq!(out, "{x} {\"k\": 1} f(x) {  } v");
    }

    #[test]
    fn rendering_is_total_and_repeatable() {
        let asset = PromptAsset::new("t", Role::Optimizer, "{a}{b}{a}");
        let b = bindings([("a", "1"), ("b", "2")]);
        assert_eq!(asset.render(&b).unwrap(), asset.render(&b).unwrap());
        assert_eq!(asset.render(&b).unwrap(), "121");
    }

    #[test]
    fn bundled_assets_load_and_pass_checks() {
        let lib = PromptLibrary::load(&PromptLibrary::bundled_dir()).unwrap();
        assert_eq!(lib.text("generic_instruction"), "Optimize this model");
        assert_eq!(lib.list("diagnostic_instructions").len(), 17);
        assert!(lib.list("diagnostic_instructions").iter().all(|i| i.starts_with("by ")));
    }

    #[test]
    fn check_flags_missing_placeholder() {
        let mut lib = PromptLibrary::load(&PromptLibrary::bundled_dir()).unwrap();
        lib.insert(PromptAsset::new("optimize", Role::Optimizer, "{code} {template} {feedback}"));
        assert!(matches!(
            lib.check(),
            Err(LlmError::AssetPlaceholderMissing { placeholder, .. }) if placeholder == "instruction"
        ));
    }
}
