//! Shared helpers for integration tests: the regression fixture, scripted
//! replies that hit exact scores, config files and journal inspection.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use tuso_core::config::ConfigFile;
use tuso_core::engine::{header_from_config, run, RunOptions};
use tuso_core::llm::ScriptedBackend;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn regression_bundle() -> PathBuf {
    fixture("regression")
}

/// Region code scoring exactly `s` on the regression fixture: predictions
/// move a fraction t = 1 - sqrt(1 - s) of the way from the training mean to
/// the (noiseless) held-out truth, so the score is 1 - (1 - t)^2 = s.
pub fn shrink(s: f64) -> String {
    format!(
        "def fit_predict(train_x, train_y, test_x):\n    mean = sum(train_y) / len(train_y)\n    t = 1.0 - (1.0 - {s}) ** 0.5\n    return [mean + t * (2.0 * x * x - x + 0.5 - mean) for x in test_x]"
    )
}

/// Region code that crashes.
pub const BROKEN: &str = "def fit_predict(train_x, train_y, test_x):\n    raise RuntimeError(\"deliberate failure\")";

/// Region code that sleeps past any test limit.
pub const SLEEPER: &str = "import time\ndef fit_predict(train_x, train_y, test_x):\n    time.sleep(60)\n    return list(test_x)";

/// Wrap region code the way a model reply would.
pub fn reply(code: &str) -> String {
    format!("Here is the updated region:\n```python\n{code}\n```\n")
}

/// A script whose setup replies are fixed and whose candidate code is served
/// in order from `queue` (implementations, repairs and optimizations).
pub fn script(queue: &[String]) -> Value {
    json!({
        "queue": queue,
        "repeat": {
            "paper_summarize": "- shrinkage toward the mean lowers variance\n- choose penalties by cross-validation",
            "paper_refine": "- fit degree-two polynomial features\n- tune the ridge penalty on training data",
            "category_draft": "<c>feature engineering|0.5</c>\n<c>regularization|0.3</c>\n<c>model selection|0.2</c>",
            "category_refine": "<c>feature engineering</c>\n<c>regularization</c>\n<c>model selection</c>\n<c>ensembling</c>",
            "instruction_draft": "<p>by adding polynomial features</p>\n<p>by standardizing x</p>\n<p>by fitting in closed form</p>\n<p>by adding a ridge penalty</p>",
            "instruction_refine": "<c>regularization</c><p>by tuning the ridge penalty with cross-validation</p>\n<c>ensembling</c><p>by averaging two polynomial fits</p>",
            "initializer_draft": "<m>closed-form quadratic least squares</m>\n<m>shrunken quadratic fit</m>",
            "initializer_refine": "<m>closed-form quadratic least squares</m>\n<m>shrunken quadratic fit</m>",
            "instruction_select": "2",
            "feedback": "The change moved predictions toward the quadratic trend.",
            "diagnostic_instrument": reply("import sys\ndef fit_predict(train_x, train_y, test_x):\n    mean = sum(train_y) / len(train_y)\n    print('diag: mean', round(mean, 4), file=sys.stderr)\n    return [mean for _ in test_x]")
        }
    })
}

/// Scripted replies for the headline scenario: two initial descriptions, the
/// first failing on every attempt (1 + 4 repairs) and the second scoring 0.1;
/// then optimization children scoring `steps` in order.
pub fn scenario_queue(steps: &[f64]) -> Vec<String> {
    let mut q: Vec<String> = (0..5).map(|_| reply(BROKEN)).collect();
    q.push(reply(&shrink(0.1)));
    q.extend(steps.iter().map(|s| reply(&shrink(*s))));
    q
}

/// Write `script.json` and `config.toml` into `dir` and return the config path.
/// `extra_run` is appended verbatim to the `[run]` table.
pub fn write_config(dir: &Path, script: &Value, extra_run: &str) -> PathBuf {
    let script_path = dir.join("script.json");
    std::fs::write(&script_path, serde_json::to_string_pretty(script).unwrap()).unwrap();
    let overridden: Vec<&str> = extra_run.lines().filter_map(|l| l.split('=').next()).map(str::trim).collect();
    let defaults: String = [
        ("journal", "\"run.jsonl\""),
        ("seed", "7"),
        ("clock", "\"logical\""),
        ("budget_seconds", "100000"),
        ("num_initializations", "2"),
        ("literature", "\"none\""),
    ]
    .iter()
    .filter(|(k, _)| !overridden.contains(k))
    .map(|(k, v)| format!("{k} = {v}\n"))
    .collect();
    let config = format!(
        r#"[run]
bundle = "{bundle}"
{defaults}{extra_run}

[backend]
kind = "scripted"
script = "script.json"
retry_attempts = 1
"#,
        bundle = regression_bundle().display(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

/// Every journal line parsed as JSON.
pub fn events(journal: &Path) -> Vec<Value> {
    std::fs::read_to_string(journal)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Journal lines with the `t_ms` timestamps removed.
pub fn without_times(journal: &Path) -> Vec<Value> {
    events(journal)
        .into_iter()
        .map(|mut v| {
            v.as_object_mut().unwrap().remove("t_ms");
            v
        })
        .collect()
}

pub fn of_kind<'a>(events: &'a [Value], kind: &str) -> Vec<&'a Value> {
    events.iter().filter(|e| e["event"] == kind).collect()
}

/// Run the fixture with literature, both action kinds and improving children,
/// under the given ablations. Returns the journal events and the backend.
pub fn ablated_run(dir: &Path, ablation: &[&str]) -> (Vec<Value>, Arc<ScriptedBackend>) {
    let mut queue = vec![reply(&shrink(0.1)), reply(&shrink(0.15))];
    queue.extend((0..40).map(|i| reply(&shrink(0.2 + 0.015 * i as f64))));
    let names: Vec<String> = ablation.iter().map(|a| format!("\"{a}\"")).collect();
    let extra = format!(
        "max_rounds = 6\nalpha = 0.5\nliterature = \"fixture\"\nliterature_fixture = \"{}\"\nablation = [{}]",
        fixture("literature.json").display(),
        names.join(", ")
    );
    let script_value = script(&queue);
    let config = write_config(dir, &script_value, &extra);
    let cfg = ConfigFile::load(&config).unwrap();
    let backend = Arc::new(ScriptedBackend::new(serde_json::from_value(script_value).unwrap()));
    let journal = dir.join("j.jsonl");
    run(header_from_config(&cfg).unwrap(), &RunOptions::new(&journal).with_backend(backend.clone())).unwrap();
    (events(&journal), backend)
}
