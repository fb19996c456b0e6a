//! The two-level knowledge tree: categories with utilities π, per-category
//! instruction lists and feedback ledgers, plus the diagnostic category.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::LlmError;
use crate::literature::PaperSummary;
use crate::llm::{extract_pair_tagged, extract_tagged, Bindings, Llm, Tag};

/// Name of the single category used by the collapsed (no-categories) tree.
pub const SINGLE_CATEGORY: &str = "all_instructions";
/// Name of the single category used when knowledge is disabled.
pub const GENERIC_CATEGORY: &str = "generic";
pub const DIAGNOSTIC_CATEGORY: &str = "diagnostic";

/// One summarized optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub summary: String,
    pub parent_score: f64,
    pub child_score: f64,
    pub round_index: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub pi: f64,
    pub instructions: Vec<String>,
    pub feedback: Vec<FeedbackEntry>,
}

impl Category {
    pub fn new(name: impl Into<String>, pi: f64) -> Self {
        Category { name: name.into(), pi, instructions: Vec::new(), feedback: Vec::new() }
    }

    /// Add an instruction, prefixing "by " if missing; exact duplicates and
    /// blank text are ignored. Returns whether it was added.
    pub fn add_instruction(&mut self, text: &str) -> bool {
        let Some(instr) = normalize_instruction(text) else { return false };
        if self.instructions.contains(&instr) {
            return false;
        }
        self.instructions.push(instr);
        true
    }

    /// The last `min(window, len)` entries, oldest first.
    pub fn recent_feedback(&self, window: usize) -> &[FeedbackEntry] {
        &self.feedback[self.feedback.len().saturating_sub(window)..]
    }
}

/// Trim, collapse to one line and ensure the "by " prefix.
pub fn normalize_instruction(text: &str) -> Option<String> {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.is_empty() {
        return None;
    }
    let lower = flat.to_lowercase();
    if lower.starts_with("by ") {
        Some(format!("by {}", &flat[3..]))
    } else {
        Some(format!("by {flat}"))
    }
}

/// Category utilities and instruction/feedback ledgers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KnowledgeTree {
    pub categories: Vec<Category>,
    /// Predefined diagnostic instructions and their ledger; outside π.
    pub diagnostic: Category,
    /// When set, rewards leave π unchanged.
    pub frozen: bool,
}

impl KnowledgeTree {
    /// Build from `(name, weight)` pairs. Non-positive or non-finite weights
    /// (or an unusable total) fall back to uniform. Duplicate names are merged.
    pub fn from_weights(weights: &[(String, f64)], diagnostic_instructions: &[String]) -> Self {
        let mut categories: Vec<Category> = Vec::new();
        for (name, w) in weights {
            match categories.iter_mut().find(|c| c.name == *name) {
                Some(c) => c.pi += w,
                None => categories.push(Category::new(name.clone(), *w)),
            }
        }
        let valid = categories.iter().all(|c| c.pi.is_finite() && c.pi > 0.0);
        if !valid {
            categories.iter_mut().for_each(|c| c.pi = 1.0);
        }
        let mut diagnostic = Category::new(DIAGNOSTIC_CATEGORY, 0.0);
        for d in diagnostic_instructions {
            diagnostic.add_instruction(d);
        }
        let mut tree = KnowledgeTree { categories, diagnostic, frozen: false };
        tree.normalize();
        tree
    }

    pub fn normalize(&mut self) {
        let total: f64 = self.categories.iter().map(|c| c.pi).sum();
        if total > 0.0 && total.is_finite() {
            self.categories.iter_mut().for_each(|c| c.pi /= total);
        }
    }

    pub fn pi_sum(&self) -> f64 {
        self.categories.iter().map(|c| c.pi).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.name.clone()).collect()
    }

    pub fn pis(&self) -> std::collections::BTreeMap<String, f64> {
        self.categories.iter().map(|c| (c.name.clone(), c.pi)).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn category_mut(&mut self, name: &str) -> Option<&mut Category> {
        self.categories.iter_mut().find(|c| c.name == name)
    }

    /// Draw a category index from Cat(π) by inverse CDF on one uniform draw.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.pi_sum();
        let mut acc = 0.0;
        for (i, c) in self.categories.iter().enumerate() {
            acc += c.pi;
            if u < acc {
                return i;
            }
        }
        self.categories.len().saturating_sub(1)
    }

    pub fn sample_category<R: Rng + ?Sized>(&self, rng: &mut R) -> &Category {
        &self.categories[self.sample_index(rng)]
    }

    /// Multiply the named category's π by `factor` and renormalize. No-op when
    /// frozen or the name is unknown; returns whether π changed.
    pub fn reward(&mut self, name: &str, factor: f64) -> bool {
        if self.frozen {
            return false;
        }
        let Some(c) = self.category_mut(name) else { return false };
        c.pi *= factor;
        self.normalize();
        true
    }

    /// Merge every category into one holding all instructions and feedback.
    pub fn collapse(&mut self, name: &str) {
        let mut single = Category::new(name, 1.0);
        for c in self.categories.drain(..) {
            for i in &c.instructions {
                single.add_instruction(i);
            }
            single.feedback.extend(c.feedback);
        }
        self.categories = vec![single];
    }
}

/// Draw up to `k` distinct instructions uniformly at random.
pub fn pick_candidates<R: Rng + ?Sized>(rng: &mut R, category: &Category, k: usize) -> Vec<String> {
    let n = category.instructions.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    index::sample(rng, n, k).into_iter().map(|i| category.instructions[i].clone()).collect()
}

/// Index chosen by a selection reply: the first integer in `1..=count`,
/// else the first candidate.
pub fn parse_choice(reply: &str, count: usize) -> usize {
    reply
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<usize>().ok())
        .find(|n| (1..=count).contains(n))
        .map(|n| n - 1)
        .unwrap_or(0)
}

/// Draw candidates and let the model choose the most promising one.
pub fn pick_instruction<R: Rng + ?Sized>(
    rng: &mut R,
    category: &Category,
    k: usize,
    llm: &dyn Llm,
    base: &Bindings,
) -> Result<(String, Vec<String>), LlmError> {
    let candidates = pick_candidates(rng, category, k);
    if candidates.len() <= 1 {
        return Ok((candidates.first().cloned().unwrap_or_default(), candidates));
    }
    let listing: Vec<String> = candidates.iter().enumerate().map(|(i, c)| format!("{}. {c}", i + 1)).collect();
    let mut b = base.clone();
    b.insert("candidates".into(), listing.join("\n"));
    b.insert("count".into(), candidates.len().to_string());
    let reply = llm.complete("instruction_select", &b)?;
    let chosen = candidates[parse_choice(&reply.text, candidates.len())].clone();
    Ok((chosen, candidates))
}

/// Render a feedback window for prompts.
pub fn format_feedback(entries: &[FeedbackEntry]) -> String {
    if entries.is_empty() {
        return "(none yet)".to_string();
    }
    entries
        .iter()
        .map(|e| format!("- {} (score {} -> {})", e.summary, e.parent_score, e.child_score))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_weighted(item: &str) -> (String, Option<f64>) {
    match item.rsplit_once('|') {
        Some((name, w)) => (clean_name(name), w.trim().parse::<f64>().ok()),
        None => (clean_name(item), None),
    }
}

fn clean_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_")
}

fn bullet_block(summary: &PaperSummary) -> String {
    summary.bullets.iter().map(|b| format!("- {b}")).collect::<Vec<_>>().join("\n")
}

/// Step 2a: draft categories with weights, then refine once per summary.
pub fn build_categories(
    llm: &dyn Llm,
    base: &Bindings,
    summaries: &[PaperSummary],
    num_categories: usize,
) -> Result<KnowledgeTree, LlmError> {
    let lib = llm.library();
    let diag = lib.list("diagnostic_instructions").to_vec();
    let mut b = base.clone();
    b.insert("num_cat".into(), num_categories.to_string());
    b.insert("classification_categories".into(), lib.list("classification_categories").join("\n"));
    let reply = llm.complete("category_draft", &b)?;
    let mut tree = match extract_tagged(&reply.text, Tag::C) {
        Ok(items) => {
            let parsed: Vec<(String, Option<f64>)> =
                items.iter().map(|i| parse_weighted(i)).filter(|(n, _)| !n.is_empty()).collect();
            if parsed.is_empty() {
                uniform(lib.list("generic_categories"), &diag)
            } else {
                let all_weighted = parsed.iter().all(|(_, w)| w.is_some_and(|w| w.is_finite() && w > 0.0));
                let weights: Vec<(String, f64)> = parsed
                    .into_iter()
                    .map(|(n, w)| (n, if all_weighted { w.unwrap_or(1.0) } else { 1.0 }))
                    .collect();
                KnowledgeTree::from_weights(&weights, &diag)
            }
        }
        Err(_) => {
            log::warn!("category draft had no <c> spans; using the generic category set");
            uniform(lib.list("generic_categories"), &diag)
        }
    };
    for summary in summaries {
        let mut b = base.clone();
        b.insert("current".into(), tree.categories.iter().map(|c| Tag::C.wrap(&c.name)).collect::<Vec<_>>().join("\n"));
        b.insert("title".into(), summary.title.clone());
        b.insert("bullet_points".into(), bullet_block(summary));
        let reply = llm.complete("category_refine", &b)?;
        if let Ok(items) = extract_tagged(&reply.text, Tag::C) {
            let names: Vec<String> = items.iter().map(|i| parse_weighted(i).0).filter(|n| !n.is_empty()).collect();
            merge_refined(&mut tree, &names);
        }
    }
    Ok(tree)
}

fn uniform(names: &[String], diag: &[String]) -> KnowledgeTree {
    let weights: Vec<(String, f64)> = names.iter().map(|n| (clean_name(n), 1.0)).collect();
    KnowledgeTree::from_weights(&weights, diag)
}

/// Apply a refined category list. Categories missing from `names` are treated
/// as merged into the newly introduced names, which share their π equally; if
/// no new name appears, nothing is removed. Pure additions get the current
/// mean π. π is renormalized afterwards.
pub fn merge_refined(tree: &mut KnowledgeTree, names: &[String]) {
    let mut fresh: Vec<String> = Vec::new();
    for n in names {
        if tree.position(n).is_none() && !fresh.contains(n) {
            fresh.push(n.clone());
        }
    }
    if fresh.is_empty() {
        return;
    }
    let (kept, omitted): (Vec<Category>, Vec<Category>) =
        tree.categories.drain(..).partition(|c| names.contains(&c.name));
    let omitted_mass: f64 = omitted.iter().map(|c| c.pi).sum();
    let share = if omitted_mass > 0.0 {
        omitted_mass / fresh.len() as f64
    } else {
        let mean = kept.iter().map(|c| c.pi).sum::<f64>() / kept.len().max(1) as f64;
        if mean > 0.0 { mean } else { 1.0 }
    };
    tree.categories = kept;
    tree.categories.extend(fresh.into_iter().map(|n| Category::new(n, share)));
    tree.normalize();
}

/// Step 2b: draft instructions for one category, then refine once per summary.
pub fn build_instructions(
    llm: &dyn Llm,
    base: &Bindings,
    summaries: &[PaperSummary],
    category: &mut Category,
    per_draft: usize,
    per_summary: usize,
) -> Result<(), LlmError> {
    let lib = llm.library();
    let mut b = base.clone();
    b.insert("category".into(), category.name.clone());
    b.insert("to_generate".into(), per_draft.to_string());
    b.insert("few_shot".into(), lib.list("instruction_examples").join("\n"));
    let reply = llm.complete("instruction_draft", &b)?;
    match extract_tagged(&reply.text, Tag::P) {
        Ok(items) => {
            for item in items.iter().take(per_draft) {
                category.add_instruction(item);
            }
        }
        Err(_) => log::warn!("instruction draft for `{}` had no <p> spans", category.name),
    }
    if category.instructions.is_empty() {
        for item in lib.list("generic_instructions") {
            category.add_instruction(item);
        }
    }
    for summary in summaries {
        let mut b = base.clone();
        b.insert("summary".into(), format!("{}\n{}", summary.title, bullet_block(summary)));
        b.insert("n_new_min".into(), "1".into());
        b.insert("n_new_max".into(), per_summary.to_string());
        b.insert("categories_line".into(), category.name.clone());
        b.insert("few_shot_block".into(), lib.list("instruction_examples").join("\n"));
        let reply = llm.complete("instruction_refine", &b)?;
        let target = category.name.to_lowercase();
        let mut added = 0;
        for (cat, instr) in extract_pair_tagged(&reply.text) {
            if added >= per_summary {
                break;
            }
            if clean_name(&cat).to_lowercase() == target && category.add_instruction(&instr) {
                added += 1;
            }
        }
    }
    Ok(())
}
