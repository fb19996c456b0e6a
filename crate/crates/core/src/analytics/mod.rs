//! Code-diversity analytics: boilerplate stripping, TF-IDF embedding,
//! windowed cosine diversity, and run report export.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use report::{export_report, ReportFiles};

/// Default neighbor window on each side for [`trajectory_diversity`].
pub const DIVERSITY_WINDOW: usize = 10;

/// Line-prefix rules for dropping uninformative lines before tokenizing.
/// Declared per bundle so the engine stays agnostic to the candidate language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanRules {
    pub comment_prefixes: Vec<String>,
    pub import_prefixes: Vec<String>,
    /// Evaluation / data-loading lines shared by every candidate.
    pub boilerplate_prefixes: Vec<String>,
}

impl Default for CleanRules {
    fn default() -> Self {
        CleanRules {
            comment_prefixes: vec!["#".into(), "//".into()],
            import_prefixes: vec!["import ".into(), "from ".into(), "use ".into(), "library(".into()],
            boilerplate_prefixes: Vec::new(),
        }
    }
}

impl CleanRules {
    /// Every configured prefix, in declaration order.
    pub fn patterns(&self) -> impl Iterator<Item = &str> {
        self.comment_prefixes
            .iter()
            .chain(&self.import_prefixes)
            .chain(&self.boilerplate_prefixes)
            .map(String::as_str)
            .filter(|p| !p.is_empty())
    }
}

/// Drop lines whose trimmed text starts with any pattern, then split the rest
/// on non-alphanumeric (underscore counts as alphanumeric) boundaries and
/// lowercase.
pub fn clean_code(code: &str, rules: &CleanRules) -> Vec<String> {
    let patterns: Vec<&str> = rules.patterns().collect();
    code.lines()
        .filter(|line| {
            let t = line.trim_start();
            !patterns.iter().any(|p| t.starts_with(p))
        })
        .flat_map(|line| {
            line.split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .filter(|tok| !tok.is_empty())
                .map(str::to_lowercase)
        })
        .collect()
}

/// Sparse TF-IDF vector of one document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CodeVector {
    pub solution_id: u64,
    pub weights: BTreeMap<String, f64>,
}

impl CodeVector {
    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Dot product; for unit vectors this is the cosine similarity. Zero vectors
    /// give 0 against everything.
    pub fn cosine(&self, other: &CodeVector) -> f64 {
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (&self.weights, &other.weights)
        } else {
            (&other.weights, &self.weights)
        };
        let dot: f64 = small.iter().filter_map(|(t, w)| large.get(t).map(|v| w * v)).sum();
        dot.clamp(0.0, 1.0)
    }
}

/// TF-IDF with raw counts, smoothed idf `ln((1+N)/(1+df)) + 1`, L2-normalized.
/// Documents with no tokens map to the zero vector.
pub fn tfidf_embed(corpus: &[Vec<String>]) -> Vec<CodeVector> {
    tfidf_embed_ids(corpus, &(0..corpus.len() as u64).collect::<Vec<_>>())
}

/// As [`tfidf_embed`], tagging each vector with the given id.
pub fn tfidf_embed_ids(corpus: &[Vec<String>], ids: &[u64]) -> Vec<CodeVector> {
    let n = corpus.len() as f64;
    let counts: Vec<BTreeMap<&str, f64>> = corpus
        .iter()
        .map(|doc| {
            let mut m = BTreeMap::new();
            for tok in doc {
                *m.entry(tok.as_str()).or_insert(0.0) += 1.0;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for doc in &counts {
        for term in doc.keys() {
            *df.entry(term).or_insert(0.0) += 1.0;
        }
    }
    counts
        .iter()
        .zip(ids)
        .map(|(doc, &id)| {
            let mut weights: BTreeMap<String, f64> = doc
                .iter()
                .map(|(term, tf)| (term.to_string(), tf * (((1.0 + n) / (1.0 + df[term])).ln() + 1.0)))
                .collect();
            let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                weights.values_mut().for_each(|w| *w /= norm);
            }
            CodeVector { solution_id: id, weights }
        })
        .collect()
}

/// Diversity of one solution relative to its generation-order neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityPoint {
    pub solution_id: u64,
    pub ordinal: usize,
    pub diversity: f64,
}

/// `1 − mean cosine(v_i, v_j)` over `j ∈ [i−window, i+window] \ {i}`, clipped
/// to existing indices. A lone vector has no neighbors and diversity 0.
pub fn trajectory_diversity(vectors: &[CodeVector], window: usize) -> Vec<DiversityPoint> {
    (0..vectors.len())
        .map(|i| {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(vectors.len() - 1);
            let sims: Vec<f64> = (lo..=hi).filter(|&j| j != i).map(|j| vectors[i].cosine(&vectors[j])).collect();
            let diversity = if sims.is_empty() {
                0.0
            } else {
                (1.0 - sims.iter().sum::<f64>() / sims.len() as f64).clamp(0.0, 1.0)
            };
            DiversityPoint { solution_id: vectors[i].solution_id, ordinal: i + 1, diversity }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn comments_and_imports_vanish() {
        let code = "# a comment\nimport numpy as np\n   from x import y\n// other\n";
        assert!(clean_code(code, &CleanRules::default()).is_empty());
    }

    #[test]
    fn tokenization_rule() {
        assert_eq!(clean_code("x = knn_smooth(y)", &CleanRules::default()), vec!["x", "knn_smooth", "y"]);
        assert_eq!(clean_code("Alpha=Beta2", &CleanRules::default()), vec!["alpha", "beta2"]);
    }

    #[test]
    fn boilerplate_prefixes_are_dropped() {
        let rules = CleanRules { boilerplate_prefixes: vec!["print(\"tuso".into()], ..CleanRules::default() };
        assert_eq!(clean_code("print(\"tuso_evaluate\", s)\nfit()", &rules), vec!["fit"]);
    }

    #[test]
    fn single_document_is_unit_length() {
        let v = tfidf_embed(&[toks("a b b c")]);
        assert!((v[0].norm() - 1.0).abs() < 1e-12);
        // with one document every idf is equal, so weights are proportional to counts
        assert!((v[0].weights["b"] / v[0].weights["a"] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_matches_hand_computation() {
        // N = 2; "a" in both docs → idf 1; "b" in one → ln(3/2)+1.
        let v = tfidf_embed(&[toks("a b"), toks("a")]);
        let idf_b = (3.0f64 / 2.0).ln() + 1.0;
        let norm = (1.0 + idf_b * idf_b).sqrt();
        assert!((v[0].weights["a"] - 1.0 / norm).abs() < 1e-12);
        assert!((v[0].weights["b"] - idf_b / norm).abs() < 1e-12);
        assert!((v[1].weights["a"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint_documents() {
        let v = tfidf_embed(&[toks("x y z"), toks("x y z"), toks("p q")]);
        assert!((v[0].cosine(&v[1]) - 1.0).abs() < 1e-12);
        assert_eq!(v[0].cosine(&v[2]), 0.0);
    }

    #[test]
    fn empty_document_is_zero_vector() {
        let v = tfidf_embed(&[vec![], toks("a")]);
        assert_eq!(v[0].norm(), 0.0);
        assert_eq!(v[0].cosine(&v[1]), 0.0);
        let d = trajectory_diversity(&v, 10);
        assert_eq!(d[0].diversity, 1.0);
    }

    #[test]
    fn window_is_clipped() {
        // 4 docs, window 1: doc 0 sees only doc 1.
        let v = tfidf_embed(&[toks("a"), toks("a"), toks("b"), toks("b")]);
        let d = trajectory_diversity(&v, 1);
        assert_eq!(d.iter().map(|p| p.diversity).collect::<Vec<_>>(), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(d[2].ordinal, 3);
    }

    proptest! {
        #[test]
        fn diversity_in_unit_interval_and_reversal_symmetric(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]", 0..6), 1..25),
            window in 1usize..12,
        ) {
            let v = tfidf_embed(&docs);
            for vec in &v {
                let n = vec.norm();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
                prop_assert!(vec.weights.values().all(|w| w.is_finite() && *w >= 0.0));
            }
            let d = trajectory_diversity(&v, window);
            prop_assert!(d.iter().all(|p| (0.0..=1.0).contains(&p.diversity)));
            let mut rev = docs.clone();
            rev.reverse();
            let dr = trajectory_diversity(&tfidf_embed(&rev), window);
            for (a, b) in d.iter().zip(dr.iter().rev()) {
                prop_assert!((a.diversity - b.diversity).abs() < 1e-9);
            }
        }
    }
}
