//! The generate → splice → execute → repair loop, written as a resumable state
//! machine so the engine can interleave several jobs: LLM steps run when
//! [`Job::advance`] is called, executions are handed back to the caller, and
//! their reports are fed in through [`Job::deliver`].

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LlmError};
use crate::llm::{extract_code, Bindings, Llm};
use crate::sandbox::bundle::TaskBundle;
use crate::sandbox::exec::{tail_chars, ExecutionReport, Executor};

/// Output tail length fed back to repair and diagnostic prompts.
pub const FEEDBACK_TAIL_CHARS: usize = 4000;

/// One prompt to issue: asset name plus bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptCall {
    pub asset: String,
    pub bindings: Bindings,
}

impl PromptCall {
    pub fn new(asset: &str, bindings: Bindings) -> Self {
        PromptCall { asset: asset.to_string(), bindings }
    }
}

/// Why an execution is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "attempt")]
pub enum ExecPurpose {
    /// Implementation attempt number (1-based).
    Attempt(u32),
    /// The once-off run of diagnostic-instrumented code; never pooled.
    Instrumented,
}

/// What the caller must do next.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Execute { program: String, region: String, purpose: ExecPurpose, limit: Duration },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Instrument,
    AwaitInstrumented,
    First,
    Repair,
    AwaitAttempt,
    Done,
}

/// Result of a finished job.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JobOutcome {
    /// Last non-empty region proposed.
    pub region: Option<String>,
    /// Report of the last implementation execution.
    pub report: Option<ExecutionReport>,
    /// Code proposals made (each counts as one attempt, executed or not).
    pub attempts: u32,
    /// Implementation executions performed.
    pub executions: u32,
    pub score: Option<f64>,
    /// Diagnostic logs given to the improvement prompt.
    pub logs: Option<String>,
    pub instrumented: Option<ExecutionReport>,
    /// Set when instrumentation yielded nothing runnable.
    pub instrument_note: Option<String>,
    /// The caller refused an execution (budget exhausted).
    pub stopped: bool,
}

/// One implement-with-repair job, optionally preceded by a diagnostic run.
#[derive(Debug, Clone)]
pub struct Job {
    first: PromptCall,
    instrument: Option<PromptCall>,
    repair_base: Bindings,
    attempts: u32,
    limit: Duration,
    phase: Phase,
    outcome: JobOutcome,
    current_region: String,
    last_executed: bool,
}

impl Job {
    /// `first` produces the initial region; `repair_base` must bind everything
    /// the `repair` asset needs except `code`, `status`, `stdout` and `stderr`.
    /// `attempts` is the total number of code proposals (1 + bug fixes).
    pub fn implement(first: PromptCall, repair_base: Bindings, attempts: u32, limit: Duration) -> Self {
        Job {
            first,
            instrument: None,
            repair_base,
            attempts: attempts.max(1),
            limit,
            phase: Phase::First,
            outcome: JobOutcome::default(),
            current_region: String::new(),
            last_executed: false,
        }
    }

    /// Instrument and run once, then bind the captured output as `logs` into
    /// `improve` and continue as an implementation job.
    pub fn diagnostic(
        instrument: PromptCall,
        improve: PromptCall,
        repair_base: Bindings,
        attempts: u32,
        limit: Duration,
    ) -> Self {
        let mut job = Job::implement(improve, repair_base, attempts, limit);
        job.instrument = Some(instrument);
        job.phase = Phase::Instrument;
        job
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Run LLM steps until an execution is needed or the job ends.
    pub fn advance(&mut self, llm: &dyn Llm, bundle: &TaskBundle) -> Result<Step, LlmError> {
        loop {
            match self.phase {
                Phase::Instrument => {
                    let call = self.instrument.as_ref().expect("diagnostic job has an instrument prompt");
                    let reply = llm.complete(&call.asset, &call.bindings)?;
                    let region = extract_code(&reply.text, &bundle.sentinel_begin, &bundle.sentinel_end);
                    match bundle.splice(&region) {
                        Ok(program) => {
                            self.phase = Phase::AwaitInstrumented;
                            return Ok(Step::Execute {
                                program,
                                region,
                                purpose: ExecPurpose::Instrumented,
                                limit: self.limit,
                            });
                        }
                        Err(e) => {
                            self.outcome.instrument_note = Some(format!("instrumentation failed: {e}"));
                            self.set_logs(String::new());
                            self.phase = Phase::First;
                        }
                    }
                }
                Phase::First => {
                    let reply = llm.complete(&self.first.asset, &self.first.bindings)?;
                    if let Some(step) = self.propose(&reply.text, bundle) {
                        return Ok(step);
                    }
                }
                Phase::Repair => {
                    let mut b = self.repair_base.clone();
                    let (status, stdout, stderr) = match &self.outcome.report {
                        Some(r) if self.last_executed => (
                            r.status_line(),
                            tail_chars(&r.stdout, FEEDBACK_TAIL_CHARS),
                            tail_chars(&r.stderr, FEEDBACK_TAIL_CHARS),
                        ),
                        _ => ("the reply contained no usable code".to_string(), String::new(), String::new()),
                    };
                    b.insert("code".into(), self.current_region.clone());
                    b.insert("status".into(), status);
                    b.insert("stdout".into(), stdout);
                    b.insert("stderr".into(), stderr);
                    let reply = llm.complete("repair", &b)?;
                    if let Some(step) = self.propose(&reply.text, bundle) {
                        return Ok(step);
                    }
                }
                Phase::AwaitInstrumented | Phase::AwaitAttempt => {
                    panic!("Job::advance called while an execution report is pending")
                }
                Phase::Done => return Ok(Step::Done),
            }
        }
    }

    fn propose(&mut self, reply: &str, bundle: &TaskBundle) -> Option<Step> {
        self.outcome.attempts += 1;
        let region = extract_code(reply, &bundle.sentinel_begin, &bundle.sentinel_end);
        match bundle.splice(&region) {
            Ok(program) => {
                self.current_region = region.clone();
                self.outcome.region = Some(region.clone());
                self.phase = Phase::AwaitAttempt;
                Some(Step::Execute {
                    program,
                    region,
                    purpose: ExecPurpose::Attempt(self.outcome.attempts),
                    limit: self.limit,
                })
            }
            Err(e) => {
                log::debug!("attempt {} produced no runnable code: {e}", self.outcome.attempts);
                self.last_executed = false;
                self.after_failure();
                None
            }
        }
    }

    fn after_failure(&mut self) {
        self.phase = if self.outcome.attempts >= self.attempts { Phase::Done } else { Phase::Repair };
    }

    fn set_logs(&mut self, logs: String) {
        self.first.bindings.insert("logs".into(), if logs.trim().is_empty() { "(no output)".into() } else { logs.clone() });
        self.outcome.logs = Some(logs);
    }

    /// Feed the report of the execution requested by the last [`Step::Execute`].
    pub fn deliver(&mut self, report: ExecutionReport) {
        match self.phase {
            Phase::AwaitInstrumented => {
                let mut logs = tail_chars(&report.stdout, FEEDBACK_TAIL_CHARS);
                if !report.stderr.trim().is_empty() {
                    if !logs.is_empty() && !logs.ends_with('\n') {
                        logs.push('\n');
                    }
                    logs.push_str("[stderr]\n");
                    logs.push_str(&tail_chars(&report.stderr, FEEDBACK_TAIL_CHARS));
                }
                if report.timed_out {
                    self.outcome.instrument_note = Some("instrumented run timed out; using partial output".into());
                }
                self.set_logs(logs);
                self.outcome.instrumented = Some(report);
                self.phase = Phase::First;
            }
            Phase::AwaitAttempt => {
                self.outcome.executions += 1;
                self.last_executed = true;
                self.outcome.score = report.score;
                let ok = report.score.is_some();
                self.outcome.report = Some(report);
                if ok {
                    self.phase = Phase::Done;
                } else {
                    self.after_failure();
                }
            }
            _ => panic!("Job::deliver called with no execution pending"),
        }
    }

    /// Abandon the job because no further execution may start.
    pub fn stop(&mut self) {
        self.outcome.stopped = true;
        self.phase = Phase::Done;
    }

    pub fn outcome(&self) -> &JobOutcome {
        &self.outcome
    }

    pub fn into_outcome(self) -> JobOutcome {
        self.outcome
    }
}

/// Observer for executions made by [`drive`].
pub trait ExecHooks {
    /// Whether another execution may start.
    fn may_execute(&mut self) -> bool {
        true
    }
    fn executed(&mut self, _purpose: ExecPurpose, _region: &str, _report: &mut ExecutionReport) {}
}

/// Hooks that allow everything and record nothing.
pub struct NoHooks;
impl ExecHooks for NoHooks {}

/// Run a job to completion sequentially.
pub fn drive(
    mut job: Job,
    llm: &dyn Llm,
    bundle: &TaskBundle,
    executor: &Executor,
    hooks: &mut dyn ExecHooks,
) -> Result<JobOutcome, Error> {
    loop {
        match job.advance(llm, bundle)? {
            Step::Done => return Ok(job.into_outcome()),
            Step::Execute { program, region, purpose, limit } => {
                if !hooks.may_execute() {
                    job.stop();
                    continue;
                }
                let mut report = executor.execute_with_limit(&program, bundle, limit)?;
                hooks.executed(purpose, &region, &mut report);
                job.deliver(report);
            }
        }
    }
}

/// Repair-prompt bindings shared by every job on a bundle.
pub fn repair_bindings(bundle: &TaskBundle, goal: &str) -> Bindings {
    let mut b = Bindings::new();
    b.insert("task_description".into(), bundle.task_description.clone());
    b.insert("data_available".into(), bundle.data_available_note.clone());
    b.insert("template".into(), bundle.template.clone());
    b.insert("goal".into(), goal.to_string());
    b
}

/// Implement `goal` (an `implement` prompt with a `description`) with up to
/// `attempts` total code proposals, each executed under `limit`.
pub fn implement_with_repair(
    llm: &dyn Llm,
    bundle: &TaskBundle,
    executor: &Executor,
    description: &str,
    attempts: u32,
    limit: Duration,
) -> Result<JobOutcome, Error> {
    let mut b = repair_bindings(bundle, description);
    b.insert("description".into(), description.to_string());
    let job = Job::implement(PromptCall::new("implement", b.clone()), b, attempts, limit);
    drive(job, llm, bundle, executor, &mut NoHooks)
}

/// Instrument `parent_code` per `instruction`, run it once, then improve it
/// using the captured logs with the given repair budget.
pub fn run_diagnostic(
    llm: &dyn Llm,
    bundle: &TaskBundle,
    executor: &Executor,
    parent_code: &str,
    parent_score: f64,
    instruction: &str,
    feedback: &str,
    attempts: u32,
    limit: Duration,
) -> Result<JobOutcome, Error> {
    let mut b = repair_bindings(bundle, instruction);
    b.insert("code".into(), parent_code.to_string());
    b.insert("score".into(), format_score(parent_score));
    b.insert("instruction".into(), instruction.to_string());
    b.insert("feedback".into(), feedback.to_string());
    let job = Job::diagnostic(
        PromptCall::new("diagnostic_instrument", b.clone()),
        PromptCall::new("diagnostic_improve", b.clone()),
        b,
        attempts,
        limit,
    );
    drive(job, llm, bundle, executor, &mut NoHooks)
}

/// Score formatting used in prompts and reports.
pub fn format_score(score: f64) -> String {
    format!("{score}")
}
