//! The C entry points driven from Rust: status codes, ownership and results
//! checked against independently computed values.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use serde_json::json;
use tuso_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> Option<String> {
    let p = tuso_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string())
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    tuso_string_free(p);
    s
}

fn fixture_bundle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/regression")
}

fn sampler(weights: &[f64], seed: u64) -> *mut TusoSampler {
    let names: Vec<CString> = (0..weights.len()).map(|i| c(&format!("cat{i}"))).collect();
    let ptrs: Vec<*const c_char> = names.iter().map(|n| n.as_ptr()).collect();
    let mut out = ptr::null_mut();
    let status = unsafe { tuso_sampler_new(ptrs.as_ptr(), weights.as_ptr(), weights.len(), seed, &mut out) };
    assert_eq!(status, TusoStatus::Ok, "{:?}", last_error());
    out
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(tuso_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_score_reports_missing_markers_and_nulls() {
    let mut score = -1.0;
    unsafe {
        assert_eq!(tuso_parse_score(c("a\ntuso_evaluate: 0.5\n").as_ptr(), &mut score), TusoStatus::Ok);
        assert_eq!(score, 0.5);
        assert_eq!(last_error(), None);
        assert_eq!(tuso_parse_score(c("tuso_evaluate: nan").as_ptr(), &mut score), TusoStatus::NotFound);
        assert!(last_error().is_some());
        assert_eq!(score, 0.5, "out-pointer untouched on failure");
        assert_eq!(tuso_parse_score(ptr::null(), &mut score), TusoStatus::NullArgument);
        assert_eq!(tuso_parse_score(c("x").as_ptr(), ptr::null_mut()), TusoStatus::NullArgument);
        let bad = [0xffu8, 0];
        assert_eq!(tuso_parse_score(bad.as_ptr().cast(), &mut score), TusoStatus::InvalidUtf8);
    }
}

#[test]
fn bundle_round_trips_and_evaluates() {
    let path = c(fixture_bundle().to_str().unwrap());
    let mut bundle = ptr::null_mut();
    unsafe {
        assert_eq!(tuso_bundle_load(path.as_ptr(), &mut bundle), TusoStatus::Ok);
        let region = "def fit_predict(train_x, train_y, test_x):\n    return [2.0 * x * x - x + 0.5 for x in test_x]";
        let mut program = ptr::null_mut();
        assert_eq!(tuso_bundle_splice(bundle, c(region).as_ptr(), &mut program), TusoStatus::Ok);
        let program = take(program);
        assert!(program.contains("# >>> tuso editable region begin"));
        let mut back = ptr::null_mut();
        assert_eq!(tuso_bundle_extract_region(bundle, c(&program).as_ptr(), &mut back), TusoStatus::Ok);
        assert_eq!(take(back), region);

        // The exact target on noiseless held-out data leaves zero error.
        let scratch = tempfile::tempdir().unwrap();
        let root = c(scratch.path().to_str().unwrap());
        let (mut score, mut timed_out) = (f64::NAN, true);
        assert_eq!(tuso_bundle_evaluate(bundle, c(region).as_ptr(), root.as_ptr(), &mut score, &mut timed_out), TusoStatus::Ok);
        assert_eq!((score, timed_out), (1.0, false));
        let broken = "def fit_predict(a, b, c):\n    raise ValueError('no')";
        assert_eq!(
            tuso_bundle_evaluate(bundle, c(broken).as_ptr(), root.as_ptr(), &mut score, &mut timed_out),
            TusoStatus::NotFound
        );
        assert!(!timed_out);
        tuso_bundle_free(bundle);
        tuso_bundle_free(ptr::null_mut());

        let mut missing = ptr::null_mut();
        assert_eq!(tuso_bundle_load(c("/nonexistent").as_ptr(), &mut missing), TusoStatus::Invalid);
        assert!(missing.is_null());
        assert!(last_error().unwrap().contains("BundleInvalid"));
    }
}

#[test]
fn sampler_weights_follow_multiplicative_rewards() {
    let s = sampler(&[1.0, 1.0, 2.0], 3);
    let pi = |i| {
        let mut p = 0.0;
        assert_eq!(unsafe { tuso_sampler_pi(s, i, &mut p) }, TusoStatus::Ok);
        p
    };
    assert_eq!(unsafe { tuso_sampler_len(s) }, 3);
    assert_eq!((pi(0), pi(1), pi(2)), (0.25, 0.25, 0.5));
    // Oracle: multiply, then divide by the new total.
    let mut w = [0.25, 0.25, 0.5];
    for (i, f) in [(0usize, 1.1), (0, 1.1), (2, 1.1), (1, 1.1)] {
        assert_eq!(unsafe { tuso_sampler_reward(s, i, f) }, TusoStatus::Ok);
        w[i] *= f;
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
    }
    for (i, expected) in w.iter().enumerate() {
        assert!((pi(i) - expected).abs() < 1e-12, "{i}: {} vs {expected}", pi(i));
    }
    unsafe {
        assert_eq!(tuso_sampler_reward(s, 3, 1.1), TusoStatus::OutOfRange);
        assert_eq!(tuso_sampler_reward(s, 0, 0.0), TusoStatus::Invalid);
        assert_eq!(tuso_sampler_reward(s, 0, f64::NAN), TusoStatus::Invalid);
        tuso_sampler_free(s);
        assert_eq!(tuso_sampler_len(ptr::null()), 0);
    }
}

#[test]
fn sampler_frequencies_match_weights_and_seeds_replay() {
    let weights = [0.1, 0.2, 0.3, 0.4];
    let draw = |seed, n| {
        let s = sampler(&weights, seed);
        let out: Vec<usize> = (0..n)
            .map(|_| {
                let mut i = usize::MAX;
                assert_eq!(unsafe { tuso_sampler_sample(s, &mut i) }, TusoStatus::Ok);
                i
            })
            .collect();
        unsafe { tuso_sampler_free(s) };
        out
    };
    let n = 40_000;
    let draws = draw(11, n);
    for (i, w) in weights.iter().enumerate() {
        let freq = draws.iter().filter(|&&d| d == i).count() as f64 / n as f64;
        // Five standard deviations of a binomial proportion.
        let tol = 5.0 * (w * (1.0 - w) / n as f64).sqrt();
        assert!((freq - w).abs() < tol, "category {i}: {freq} vs {w}");
    }
    assert_eq!(draw(11, 200), draws[..200]);
    assert_ne!(draw(12, 200), draws[..200]);
}

#[test]
fn sampler_rejects_bad_inputs() {
    let names = [c("a"), c("a")];
    let ptrs = [names[0].as_ptr(), names[1].as_ptr()];
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(tuso_sampler_new(ptrs.as_ptr(), [1.0, 1.0].as_ptr(), 2, 0, &mut out), TusoStatus::Invalid);
        assert_eq!(tuso_sampler_new(ptrs.as_ptr(), [1.0, -1.0].as_ptr(), 2, 0, &mut out), TusoStatus::Invalid);
        assert_eq!(tuso_sampler_new(ptrs.as_ptr(), ptr::null(), 1, 0, &mut out), TusoStatus::NullArgument);
        assert_eq!(tuso_sampler_new(ptr::null(), ptr::null(), 0, 0, &mut out), TusoStatus::Invalid);
        assert!(out.is_null());
        let mut i = 0;
        assert_eq!(tuso_sampler_sample(ptr::null_mut(), &mut i), TusoStatus::NullArgument);
    }
}

#[test]
fn diversity_matches_cosine_oracle() {
    // Identical neighbors have cosine 1, disjoint vocabularies cosine 0, so
    // with window 1: [1 - 1, 1 - (1 + 0) / 2, 1 - 0].
    let snippets = [c("alpha beta"), c("# a comment\nalpha beta"), c("import os\ngamma delta")];
    let ptrs: Vec<*const c_char> = snippets.iter().map(|s| s.as_ptr()).collect();
    let mut out = [f64::NAN; 3];
    assert_eq!(unsafe { tuso_diversity(ptrs.as_ptr(), 3, 1, out.as_mut_ptr()) }, TusoStatus::Ok);
    let expected = [0.0, 0.5, 1.0];
    for (got, want) in out.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{out:?}");
    }
    assert_eq!(unsafe { tuso_diversity(ptr::null(), 0, 1, ptr::null_mut()) }, TusoStatus::Ok);
    assert_eq!(unsafe { tuso_diversity(ptrs.as_ptr(), 3, 1, ptr::null_mut()) }, TusoStatus::NullArgument);
}

fn reply(score: f64) -> String {
    // Moves predictions a fraction t = 1 - sqrt(1 - s) toward the noiseless
    // held-out truth, scoring exactly s.
    format!(
        "```python\ndef fit_predict(train_x, train_y, test_x):\n    mean = sum(train_y) / len(train_y)\n    t = 1.0 - (1.0 - {score}) ** 0.5\n    return [mean + t * (2.0 * x * x - x + 0.5 - mean) for x in test_x]\n```"
    )
}

fn write_run(dir: &Path) -> PathBuf {
    let queue: Vec<String> = (0..30).map(|i| reply(0.1 + 0.02 * i as f64)).collect();
    let script = json!({
        "queue": queue,
        "repeat": {
            "category_draft": "<c>features|0.6</c>\n<c>regularization|0.4</c>",
            "category_refine": "<c>features</c>\n<c>regularization</c>",
            "instruction_draft": "<p>by adding polynomial features</p>\n<p>by adding a ridge penalty</p>",
            "instruction_refine": "",
            "initializer_draft": "<m>quadratic least squares</m>\n<m>shrunken quadratic fit</m>",
            "initializer_refine": "<m>quadratic least squares</m>\n<m>shrunken quadratic fit</m>",
            "instruction_select": "1",
            "feedback": "Predictions moved toward the trend.",
            "diagnostic_instrument": reply(0.05)
        }
    });
    std::fs::write(dir.join("script.json"), script.to_string()).unwrap();
    let config = format!(
        "[run]\nbundle = \"{}\"\njournal = \"run.jsonl\"\nseed = 5\nclock = \"logical\"\nbudget_seconds = 100000\nnum_initializations = 2\nmax_rounds = 2\nliterature = \"none\"\n\n[backend]\nkind = \"scripted\"\nscript = \"script.json\"\nretry_attempts = 1\n",
        fixture_bundle().display()
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn run_resume_and_report_through_the_c_api() {
    let dir = tempfile::tempdir().unwrap();
    let config = c(write_run(dir.path()).to_str().unwrap());
    let (mut score, mut id) = (f64::NAN, u64::MAX);
    assert_eq!(unsafe { tuso_run(config.as_ptr(), &mut score, &mut id) }, TusoStatus::Ok, "{:?}", last_error());
    assert!(score > 0.1 && score < 1.0, "{score}");
    assert_ne!(id, u64::MAX);

    // The journal's best scored solution agrees with the returned one.
    let journal = dir.path().join("run.jsonl");
    let text = std::fs::read_to_string(&journal).unwrap();
    let best = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter_map(|e| e["solution"]["score"].as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, score);

    // Resuming a finished run changes nothing.
    let jp = c(journal.to_str().unwrap());
    let (mut again, mut again_id) = (f64::NAN, 0);
    assert_eq!(unsafe { tuso_resume(jp.as_ptr(), &mut again, &mut again_id) }, TusoStatus::Ok, "{:?}", last_error());
    assert_eq!((again, again_id), (score, id));
    assert_eq!(std::fs::read_to_string(&journal).unwrap(), text);
    // Out-pointers are optional.
    assert_eq!(unsafe { tuso_resume(jp.as_ptr(), ptr::null_mut(), ptr::null_mut()) }, TusoStatus::Ok);

    let out = dir.path().join("report");
    assert_eq!(unsafe { tuso_report(jp.as_ptr(), c(out.to_str().unwrap()).as_ptr()) }, TusoStatus::Ok, "{:?}", last_error());
    assert!(std::fs::read_dir(&out).unwrap().count() > 0);
}

#[test]
fn engine_errors_map_to_cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("bad.jsonl");
    std::fs::write(&garbage, "not json\n").unwrap();
    let status = unsafe { tuso_resume(c(garbage.to_str().unwrap()).as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status as i32, 4);
    assert_eq!(status, TusoStatus::CorruptJournal);

    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[run]\nunknown_key = 1\n").unwrap();
    let status = unsafe { tuso_run(c(config.to_str().unwrap()).as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status as i32, 2);
    assert!(last_error().is_some());
}
