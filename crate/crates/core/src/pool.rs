//! The solution pool: storage, argmax, and diversity-clustered top selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{clean_code, tfidf_embed_ids, CleanRules};
use crate::error::PoolError;
use crate::journal::{self, Journal, Record};

pub type SolutionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Timeout,
}

/// How a child solution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Instruction,
    Diagnostic,
}

/// One candidate editable region and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub id: SolutionId,
    pub code: String,
    pub score: Option<f64>,
    pub status: Status,
    pub parent_id: Option<SolutionId>,
    pub category_name: Option<String>,
    pub action_kind: Option<ActionKind>,
    pub length_chars: usize,
    pub round_index: u64,
    /// Milliseconds of run time elapsed when the solution was evaluated.
    pub created_at_ms: u64,
}

impl Solution {
    /// A solution whose status follows from its score: `Ok` with a score,
    /// otherwise `Timeout` or `Failed`.
    pub fn new(id: SolutionId, code: impl Into<String>, score: Option<f64>, timed_out: bool) -> Self {
        let code = code.into();
        let status = match (score, timed_out) {
            (Some(_), false) => Status::Ok,
            (_, true) => Status::Timeout,
            (None, false) => Status::Failed,
        };
        Solution {
            id,
            length_chars: code.chars().count(),
            code,
            score: if status == Status::Ok { score } else { None },
            status,
            parent_id: None,
            category_name: None,
            action_kind: None,
            round_index: 0,
            created_at_ms: 0,
        }
    }

    pub fn with_lineage(mut self, parent: SolutionId, category: Option<String>, kind: ActionKind) -> Self {
        self.parent_id = Some(parent);
        self.category_name = category;
        self.action_kind = Some(kind);
        self
    }

    pub fn at(mut self, round_index: u64, created_at_ms: u64) -> Self {
        self.round_index = round_index;
        self.created_at_ms = created_at_ms;
        self
    }

    pub fn is_selectable(&self) -> bool {
        self.status == Status::Ok && self.score.is_some()
    }

    fn ok_score(&self) -> f64 {
        self.score.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Cluster membership of the selectable solutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub clusters: BTreeMap<SolutionId, usize>,
}

/// Parameters of diverse-top selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectParams {
    /// Relative score band below a cluster's best (0.001 = 0.1%).
    pub band: f64,
    pub rules: CleanRules,
    /// k-means restarts; the lowest-inertia clustering wins.
    pub restarts: usize,
}

impl Default for SelectParams {
    fn default() -> Self {
        SelectParams { band: 0.001, rules: CleanRules::default(), restarts: 10 }
    }
}

/// Absolute band used when a cluster's best score is exactly zero.
pub const ZERO_BAND: f64 = 1e-9;

/// Lowest score still within `band` of `best`.
pub fn band_floor(best: f64, band: f64) -> f64 {
    if best == 0.0 {
        -ZERO_BAND
    } else {
        best - band * best.abs()
    }
}

/// Insertion-ordered solutions, including failed ones (which are never selected).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    solutions: Vec<Solution>,
    index: HashMap<SolutionId, usize>,
}

/// Result of [`Pool::load`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPool {
    pub pool: Pool,
    /// The file ended in an incomplete record, which was ignored.
    pub truncated: bool,
}

impl Pool {
    pub fn new() -> Self {
        Pool::default()
    }

    pub fn insert(&mut self, solution: Solution) -> Result<(), PoolError> {
        if self.index.contains_key(&solution.id) {
            return Err(PoolError::DuplicateId(solution.id));
        }
        self.index.insert(solution.id, self.solutions.len());
        self.solutions.push(solution);
        Ok(())
    }

    pub fn get(&self, id: SolutionId) -> Option<&Solution> {
        self.index.get(&id).map(|&i| &self.solutions[i])
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// All solutions in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter()
    }

    pub fn selectable(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter().filter(|s| s.is_selectable())
    }

    pub fn selectable_count(&self) -> usize {
        self.selectable().count()
    }

    /// Highest score; ties go to the earliest inserted.
    pub fn best(&self) -> Result<&Solution, PoolError> {
        let mut best: Option<&Solution> = None;
        for s in self.selectable() {
            if best.is_none_or(|b| s.ok_score() > b.ok_score()) {
                best = Some(s);
            }
        }
        best.ok_or(PoolError::NoSelectable)
    }

    /// Cluster selectable solutions into `min(n, #ok)` groups by cleaned-code
    /// TF-IDF similarity and return, per cluster, the shortest solution within
    /// the score band of the cluster's best, sorted by score descending.
    pub fn diverse_top<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        params: &SelectParams,
    ) -> Result<Vec<Solution>, PoolError> {
        self.diverse_top_with_clusters(n, rng, params).map(|(top, _)| top)
    }

    pub fn diverse_top_with_clusters<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        params: &SelectParams,
    ) -> Result<(Vec<Solution>, ClusterAssignment), PoolError> {
        let ok: Vec<&Solution> = self.selectable().collect();
        if ok.is_empty() {
            return Err(PoolError::NoSelectable);
        }
        let k = n.max(1).min(ok.len());
        let corpus: Vec<Vec<String>> = ok.iter().map(|s| clean_code(&s.code, &params.rules)).collect();
        let ids: Vec<u64> = ok.iter().map(|s| s.id).collect();
        let vectors = tfidf_embed_ids(&corpus, &ids);
        let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &vectors {
            for term in v.weights.keys() {
                let next = vocab.len();
                vocab.entry(term.as_str()).or_insert(next);
            }
        }
        let dense: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| {
                let mut row = vec![0.0; vocab.len()];
                for (term, w) in &v.weights {
                    row[vocab[term.as_str()]] = *w;
                }
                row
            })
            .collect();
        let labels = kmeans(&dense, k, params.restarts.max(1), rng);

        let mut members: BTreeMap<usize, Vec<&Solution>> = BTreeMap::new();
        for (s, &label) in ok.iter().zip(&labels) {
            members.entry(label).or_default().push(s);
        }
        let mut picked: Vec<(usize, &Solution)> = members
            .values()
            .map(|group| {
                let best = group.iter().map(|s| s.ok_score()).fold(f64::NEG_INFINITY, f64::max);
                let floor = band_floor(best, params.band);
                let chosen = group
                    .iter()
                    .filter(|s| s.ok_score() >= floor)
                    .min_by(|a, b| {
                        a.length_chars
                            .cmp(&b.length_chars)
                            .then(b.ok_score().total_cmp(&a.ok_score()))
                            .then(self.index[&a.id].cmp(&self.index[&b.id]))
                    })
                    .expect("cluster best is always eligible");
                (self.index[&chosen.id], *chosen)
            })
            .collect();
        picked.sort_by(|(ia, a), (ib, b)| b.ok_score().total_cmp(&a.ok_score()).then(ia.cmp(ib)));
        let assignment = ClusterAssignment {
            k,
            clusters: ok.iter().zip(&labels).map(|(s, &l)| (s.id, l)).collect(),
        };
        Ok((picked.into_iter().map(|(_, s)| s.clone()).collect(), assignment))
    }

    /// Write every solution as a journal record.
    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let journal = Journal::create(path)?;
        for s in &self.solutions {
            journal.append(s.created_at_ms, &Record::Solution { solution: s.clone() })?;
        }
        Ok(())
    }

    /// Rebuild a pool from the solution records of a journal.
    pub fn load(path: &Path) -> Result<LoadedPool, PoolError> {
        let contents = journal::read(path)?;
        let mut pool = Pool::new();
        for entry in contents.entries {
            if let Record::Solution { solution } = entry.record {
                pool.insert(solution)?;
            }
        }
        Ok(LoadedPool { pool, truncated: contents.truncated_tail })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations, best of `restarts` by
/// inertia. Returns a cluster label per point; labels are renumbered in order
/// of first appearance.
fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, restarts: usize, rng: &mut R) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let (inertia, labels) = kmeans_once(points, k, rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b - 1e-12) {
            best = Some((inertia, labels));
        }
    }
    let labels = best.map(|(_, l)| l).unwrap_or_default();
    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = renumber.len();
            *renumber.entry(*l).or_insert(next)
        })
        .collect()
}

fn kmeans_once<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|d| *d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
    }
    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in centers.iter().enumerate() {
                    let d = sq_dist(p, c);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..100 {
        for (j, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, l)| **l == j).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, value) in center.iter_mut().enumerate() {
                *value = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (inertia, labels)
}
