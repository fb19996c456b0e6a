//! Sandboxed execution of candidate programs and the LLM repair loop.

pub mod bundle;
pub mod exec;
pub mod job;

pub use bundle::{CleanupPolicy, TaskBundle};
pub use exec::{group_alive, parse_score, tail_chars, ExecutionReport, Executor, ExitInfo, KILL_GRACE, SCORE_MARKER};
pub use job::{
    drive, format_score, implement_with_repair, repair_bindings, run_diagnostic, ExecHooks, ExecPurpose, Job,
    JobOutcome, NoHooks, PromptCall, Step, FEEDBACK_TAIL_CHARS,
};
