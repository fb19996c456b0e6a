//! Post-hoc run reports built from a journal (read-only).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analytics::{clean_code, tfidf_embed_ids, trajectory_diversity, CleanRules, DIVERSITY_WINDOW};
use crate::error::JournalError;
use crate::journal::{self, Record};
use crate::pool::{Solution, Status};
use crate::sandbox::ExecPurpose;

/// Paths of the files written by [`export_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub best_curve: PathBuf,
    pub diversity: PathBuf,
    pub pi_history: PathBuf,
    pub failures: PathBuf,
    pub summary: PathBuf,
}

#[derive(Default)]
struct ExecStats {
    executions: u64,
    failed: u64,
    timed_out: u64,
}

/// Write `best_curve.csv`, `diversity.csv`, `pi_history.csv`, `failures.csv`
/// and `summary.txt` into `out_dir`.
pub fn export_report(journal_path: &Path, out_dir: &Path) -> Result<ReportFiles, JournalError> {
    let contents = journal::read(journal_path)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| JournalError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let rules = contents.header().map(|h| h.bundle.clean.clone()).unwrap_or_else(CleanRules::default);

    let mut solutions: Vec<&Solution> = Vec::new();
    let mut pi_rows: Vec<(u64, BTreeMap<String, f64>)> = Vec::new();
    let mut stats: BTreeMap<&'static str, ExecStats> = BTreeMap::new();
    let mut max_round = 0u64;
    for record in contents.records() {
        match record {
            Record::Solution { solution } => {
                max_round = max_round.max(solution.round_index);
                solutions.push(solution);
            }
            Record::Tree { tree, .. } if pi_rows.is_empty() => pi_rows.push((0, tree.pis())),
            Record::Reward { round, pi, .. } => pi_rows.push((*round, pi.clone())),
            Record::Checkpoint(cp) => max_round = max_round.max(cp.round),
            Record::Execution { round, purpose: ExecPurpose::Attempt(_), report, .. } => {
                let s = stats.entry(if *round == 0 { "initialization" } else { "optimization" }).or_default();
                s.executions += 1;
                s.failed += u64::from(report.score.is_none() && !report.timed_out);
                s.timed_out += u64::from(report.timed_out);
            }
            Record::DiagnosticRun { report, .. } => {
                let s = stats.entry("diagnostic_instrumented").or_default();
                if let Some(r) = report {
                    s.executions += 1;
                    s.failed += u64::from(r.score.is_none() && !r.timed_out);
                    s.timed_out += u64::from(r.timed_out);
                }
            }
            _ => {}
        }
    }

    let mut best_csv = String::from("round,best_score\n");
    for round in 1..=max_round {
        let best = solutions
            .iter()
            .filter(|s| s.round_index <= round && s.status == Status::Ok)
            .filter_map(|s| s.score)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        if let Some(b) = best {
            let _ = writeln!(best_csv, "{round},{b}");
        }
    }

    let ok: Vec<&&Solution> = solutions.iter().filter(|s| s.status == Status::Ok).collect();
    let corpus: Vec<Vec<String>> = ok.iter().map(|s| clean_code(&s.code, &rules)).collect();
    let ids: Vec<u64> = ok.iter().map(|s| s.id).collect();
    let mut div_csv = String::from("ordinal,solution_id,diversity\n");
    for p in trajectory_diversity(&tfidf_embed_ids(&corpus, &ids), DIVERSITY_WINDOW) {
        let _ = writeln!(div_csv, "{},{},{}", p.ordinal, p.solution_id, p.diversity);
    }

    let mut pi_csv = String::from("round,category,pi\n");
    for (round, pis) in &pi_rows {
        for (name, pi) in pis {
            let _ = writeln!(pi_csv, "{round},{},{pi}", csv_field(name));
        }
    }

    let mut fail_csv = String::from("phase,executions,failed,timed_out\n");
    for (phase, s) in &stats {
        let _ = writeln!(fail_csv, "{phase},{},{},{}", s.executions, s.failed, s.timed_out);
    }

    let mut summary = String::new();
    let finished = contents.records().find_map(|r| match r {
        Record::RunFinished { rounds, best_id, best_score, reason } => Some((*rounds, *best_id, *best_score, reason.clone())),
        _ => None,
    });
    let _ = writeln!(summary, "status: {}", if finished.is_some() { "complete" } else { "in progress" });
    if let Some(h) = contents.header() {
        let _ = writeln!(summary, "task: {}", h.bundle.name);
        let _ = writeln!(summary, "seed: {}", h.config.seed);
        let _ = writeln!(summary, "ablations: {}", h.config.ablation.names().join(", "));
    }
    let _ = writeln!(summary, "rounds: {max_round}");
    let _ = writeln!(summary, "solutions: {} ({} ok)", solutions.len(), ok.len());
    let best = ok.iter().fold(None::<&Solution>, |b, s| match b {
        Some(b) if b.score >= s.score => Some(b),
        _ => Some(s),
    });
    match (&finished, best) {
        (Some((_, id, score, reason)), _) => {
            let _ = writeln!(summary, "best: solution {id} score {score}");
            let _ = writeln!(summary, "stopped: {reason}");
        }
        (None, Some(b)) => {
            let _ = writeln!(summary, "best so far: solution {} score {}", b.id, b.score.unwrap_or(f64::NAN));
        }
        (None, None) => {
            let _ = writeln!(summary, "best so far: none");
        }
    }
    if contents.truncated_tail {
        let _ = writeln!(summary, "note: journal ends in an incomplete record");
    }

    let files = ReportFiles {
        best_curve: out_dir.join("best_curve.csv"),
        diversity: out_dir.join("diversity.csv"),
        pi_history: out_dir.join("pi_history.csv"),
        failures: out_dir.join("failures.csv"),
        summary: out_dir.join("summary.txt"),
    };
    for (path, text) in [
        (&files.best_curve, &best_csv),
        (&files.diversity, &div_csv),
        (&files.pi_history, &pi_csv),
        (&files.failures, &fail_csv),
        (&files.summary, &summary),
    ] {
        std::fs::write(path, text).map_err(io(path))?;
    }
    Ok(files)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::journal::Journal;
    use crate::knowledge::KnowledgeTree;

    fn sol(id: u64, round: u64, score: f64) -> Record {
        Record::Solution { solution: Solution::new(id, format!("code{id} x"), Some(score), false).at(round, id) }
    }

    #[test]
    fn best_curve_is_running_max() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("j.jsonl");
        let journal = Journal::create(&j).unwrap();
        for (id, round, score) in [(1, 1, 0.1), (2, 2, 0.5), (3, 3, 0.3)] {
            journal.append(0, &sol(id, round, score)).unwrap();
        }
        let files = export_report(&j, &dir.path().join("out")).unwrap();
        let csv = std::fs::read_to_string(files.best_curve).unwrap();
        assert_eq!(csv, "round,best_score\n1,0.1\n2,0.5\n3,0.5\n");
        let summary = std::fs::read_to_string(files.summary).unwrap();
        assert!(summary.contains("in progress"));
    }

    #[test]
    fn empty_journal_gives_header_only_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("j.jsonl");
        std::fs::write(&j, "").unwrap();
        let f = export_report(&j, &dir.path().join("out")).unwrap();
        assert_eq!(std::fs::read_to_string(f.best_curve).unwrap(), "round,best_score\n");
        assert_eq!(std::fs::read_to_string(f.diversity).unwrap(), "ordinal,solution_id,diversity\n");
        assert_eq!(std::fs::read_to_string(f.pi_history).unwrap(), "round,category,pi\n");
    }

    #[test]
    fn one_reward_is_one_change_point() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("j.jsonl");
        let journal = Journal::create(&j).unwrap();
        let mut tree = KnowledgeTree::from_weights(&[("A".into(), 0.5), ("B".into(), 0.5)], &[]);
        journal.append(0, &Record::Tree { reason: "built".into(), tree: tree.clone() }).unwrap();
        tree.reward("A", 1.1);
        journal.append(1, &Record::Reward { round: 1, category: "A".into(), pi: tree.pis() }).unwrap();
        let f = export_report(&j, &dir.path().join("out")).unwrap();
        let csv = std::fs::read_to_string(f.pi_history).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        let a: Vec<&str> = rows.iter().filter(|r| r.contains(",A,")).map(|r| r.rsplit(',').next().unwrap()).collect();
        assert_eq!(a.len(), 2);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn report_does_not_touch_journal() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("j.jsonl");
        let journal = Journal::create(&j).unwrap();
        journal.append(0, &sol(1, 1, 0.2)).unwrap();
        let before = std::fs::read(&j).unwrap();
        export_report(&j, &dir.path().join("out")).unwrap();
        assert_eq!(std::fs::read(&j).unwrap(), before);
    }
}
