//! Agentic method optimization: an LLM proposes edits to the region of a
//! program between two sentinel lines, a sandbox scores each candidate, and a
//! knowledge tree of literature-derived instructions steers the search.

pub mod analytics;
pub mod clock;
pub mod config;
pub mod engine;
pub mod error;
pub mod journal;
pub mod knowledge;
pub mod literature;
pub mod llm;
pub mod net;
pub mod pool;
pub mod rng;
pub mod sandbox;

pub use engine::{resume, run, RunOptions, RunResult};
pub use error::{Error, Result};
