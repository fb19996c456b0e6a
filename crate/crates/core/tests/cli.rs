mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn tuso(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tuso"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("TUSO_API_KEY")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Copy the regression bundle, optionally rewriting its manifest or template.
fn bundle_copy(dir: &Path, manifest_edit: impl Fn(String) -> String, template_edit: impl Fn(String) -> String) -> std::path::PathBuf {
    let src = regression_bundle();
    let dst = dir.join("bundle");
    std::fs::create_dir_all(&dst).unwrap();
    for name in ["data.csv", "template.py", "bundle.toml"] {
        let body = std::fs::read_to_string(src.join(name)).unwrap();
        let body = match name {
            "bundle.toml" => manifest_edit(body),
            "template.py" => template_edit(body),
            _ => body,
        };
        std::fs::write(dst.join(name), body).unwrap();
    }
    dst
}

#[test]
fn help_snapshot_lists_every_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = tuso(&["--help"], dir.path());
    assert!(out.status.success());
    let help = text(&out.stdout);
    let snapshot = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots/help.txt")).unwrap();
    assert_eq!(help, snapshot, "--help changed; regenerate tests/snapshots/help.txt if intended");
    for key in tuso_core::config::documented_keys() {
        let line = help.lines().find(|l| l.trim_start().starts_with(&format!("{} ", key.key))).unwrap_or_else(|| panic!("{}", key.key));
        assert!(line.contains(&key.default), "{line}");
    }
}

#[test]
fn init_reports_baseline_score() {
    let dir = tempfile::tempdir().unwrap();
    let out = tuso(&["init", regression_bundle().to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    // The template predicts the training mean, the normalizer itself.
    assert_eq!(text(&out.stdout).trim(), "OK, baseline score 0");
}

#[test]
fn init_names_missing_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = bundle_copy(dir.path(), |m| m, |t| t.replace("# <<< tuso editable region end\n", ""));
    let out = tuso(&["init", bundle.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("SentinelMissing"), "{}", text(&out.stderr));
}

#[test]
fn init_names_unresolvable_command() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = bundle_copy(dir.path(), |m| m.replace("[\"python3\"]", "[\"no-such-interpreter-xyz\"]"), |t| t);
    let out = tuso(&["init", bundle.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("SpawnFailure"), "{}", text(&out.stderr));
}

#[test]
fn init_names_missing_marker() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = bundle_copy(dir.path(), |m| m, |t| t.replace("print(\"tuso_evaluate:\"", "print(\"score:\""));
    let out = tuso(&["init", bundle.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("MarkerMissing"));
}

#[test]
fn run_prints_deterministic_best_and_journal() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4, 0.3, 0.7])), "max_rounds = 3");
    let args = ["run", "-c", config.to_str().unwrap(), "--budget", "60", "--seed", "7"];
    let first = tuso(&args, dir.path());
    assert!(first.status.success(), "{}", text(&first.stderr));
    let stdout = text(&first.stdout);
    assert!(stdout.starts_with("best score 0.7 (solution 4, 3 rounds, finished)"), "{stdout}");
    assert!(stdout.contains(&format!("journal {}", dir.path().join("run.jsonl").display())));
    let journal_a = std::fs::read(dir.path().join("run.jsonl")).unwrap();
    let second = tuso(&args, dir.path());
    assert_eq!(text(&second.stdout), stdout);
    assert_eq!(journal_a, std::fs::read(dir.path().join("run.jsonl")).unwrap());
    let header = &events(&dir.path().join("run.jsonl"))[0]["header"]["config"];
    assert_eq!(header["budget_seconds"], 60);
    assert_eq!(header["seed"], 7);
}

#[test]
fn run_ablation_flag_suppresses_literature() {
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(
        "max_rounds = 1\nliterature = \"fixture\"\nliterature_fixture = \"{}\"",
        fixture("literature.json").display()
    );
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4])), &extra);
    let out = tuso(&["run", "-c", config.to_str().unwrap(), "--ablation", "no_knowledge"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let ev = events(&dir.path().join("run.jsonl"));
    assert!(of_kind(&ev, "literature_search").is_empty());
    assert!(of_kind(&ev, "paper_summary").is_empty());
}

#[test]
fn run_warm_start_with_zero_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[])), "");
    let warm = regression_bundle().join("solutions/warm_start.py");
    let out = tuso(&["run", "-c", config.to_str().unwrap(), "--budget", "0", "--warm-start", warm.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("best score 0.173717 (solution 0, 0 rounds"));
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let broken: Vec<String> = (0..10).map(|_| reply(BROKEN)).collect();
    let config = write_config(dir.path(), &script(&broken), "");
    assert_eq!(tuso(&["run", "-c", config.to_str().unwrap()], dir.path()).status.code(), Some(1));

    let config = write_config(dir.path(), &script(&[]), "");
    let out = tuso(&["run", "-c", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("BackendUnavailable"));

    let config = write_config(dir.path(), &script(&[]), "alpha = 2.0");
    assert_eq!(tuso(&["run", "-c", config.to_str().unwrap()], dir.path()).status.code(), Some(2));

    std::fs::write(dir.path().join("bad.toml"), "[run]\nbundle = \"b\"\njournal = \"j\"\ncolour = 1\n").unwrap();
    let out = tuso(&["run", "-c", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("unknown key `run.colour`"));

    let config = write_config(dir.path(), &script(&[]), "");
    let out = tuso(&["run", "-c", config.to_str().unwrap(), "--ablation", "no_such_thing"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_cycle_and_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4, 0.3, 0.7, 0.75])), "max_rounds = 4");
    let cfg = config.to_str().unwrap();
    let out = tuso(&["run", "-c", cfg, "--stop-after-round", "2"], dir.path());
    assert!(text(&out.stdout).contains("interrupted"), "{}", text(&out.stdout));
    let journal = dir.path().join("run.jsonl");
    let out = tuso(&["resume", journal.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("best score 0.75"));
    let done = std::fs::read(&journal).unwrap();
    let out = tuso(&["resume", journal.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(done, std::fs::read(&journal).unwrap());
}

#[test]
fn resume_truncated_journal_warns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4, 0.3])), "max_rounds = 2");
    let cfg = config.to_str().unwrap();
    tuso(&["run", "-c", cfg, "--stop-after-round", "1"], dir.path());
    let journal = dir.path().join("run.jsonl");
    let mut body = std::fs::read_to_string(&journal).unwrap();
    body.push_str("{\"t_ms\":0,\"event\":\"note\",\"message\":\"partial round\"}\n{\"t_ms\":0,\"ev");
    std::fs::write(&journal, body).unwrap();
    let out = tuso(&["resume", journal.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("discarding the partial round"), "{}", text(&out.stderr));
    assert!(!std::fs::read_to_string(&journal).unwrap().contains("partial round"));
}

#[test]
fn resume_corrupt_journal_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("j.jsonl"), "{\"t_ms\":0}\ngarbage\n{}\n").unwrap();
    let out = tuso(&["resume", "j.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).contains("CorruptJournal"));
}

#[test]
fn report_writes_files_and_refuses_non_empty_dir() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4, 0.3, 0.7])), "max_rounds = 3");
    tuso(&["run", "-c", config.to_str().unwrap()], dir.path());
    let out = tuso(&["report", "run.jsonl", "--out", "report"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    for f in ["best_curve.csv", "diversity.csv", "pi_history.csv", "failures.csv", "summary.txt"] {
        assert!(dir.path().join("report").join(f).is_file(), "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("report/summary.txt")).unwrap();
    assert!(summary.contains("status: complete"));
    let curve = std::fs::read_to_string(dir.path().join("report/best_curve.csv")).unwrap();
    assert_eq!(curve, "round,best_score\n1,0.4\n2,0.4\n3,0.7\n");

    let refused = tuso(&["report", "run.jsonl", "--out", "report"], dir.path());
    assert_eq!(refused.status.code(), Some(2));
    assert!(text(&refused.stderr).contains("--force"));
    let forced = tuso(&["report", "run.jsonl", "--out", "report", "--force"], dir.path());
    assert!(forced.status.success());
}

#[test]
fn report_on_in_progress_journal() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &script(&scenario_queue(&[0.4, 0.3])), "max_rounds = 2");
    tuso(&["run", "-c", config.to_str().unwrap(), "--stop-after-round", "1"], dir.path());
    let out = tuso(&["report", "run.jsonl", "--out", "partial"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("partial/summary.txt")).unwrap();
    assert!(summary.contains("status: in progress"), "{summary}");
}
