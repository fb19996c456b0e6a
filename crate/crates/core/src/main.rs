//! `tuso` command-line interface.
//!
//! Exit codes: 0 success, 1 no initial solution scored, 2 invalid bundle,
//! config or prompt assets (including a failed `init` check), 3 LLM backend
//! unavailable, 4 corrupt journal, 5 any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use tuso_core::analytics::export_report;
use tuso_core::config::{documented_keys, Ablation, ClockKind, ConfigFile};
use tuso_core::engine::{self, header_from_config, options_from_config, RunOptions};
use tuso_core::journal;
use tuso_core::net::UreqTransport;
use tuso_core::sandbox::{Executor, TaskBundle};
use tuso_core::Error;

#[derive(Debug, Parser)]
#[command(name = "tuso", version, about = "Literature-guided agentic optimization of a program's editable region")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a task bundle and dry-run its unmodified template.
    Init {
        /// Bundle directory (containing bundle.toml) or manifest file.
        bundle: PathBuf,
    },
    /// Start an optimization run from a config file.
    Run {
        /// TOML config file with [run] and [backend] tables.
        #[arg(short, long)]
        config: PathBuf,
        /// Override run.budget_seconds.
        #[arg(long)]
        budget: Option<u64>,
        /// Override run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override run.alpha.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override run.warm_start.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Enable an ablation (repeatable); replaces run.ablation when given.
        #[arg(long)]
        ablation: Vec<String>,
        /// Override run.max_rounds.
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Override run.clock (wall | logical).
        #[arg(long)]
        clock: Option<String>,
        /// Stop after this many completed rounds, leaving the journal resumable.
        #[arg(long, hide = true)]
        stop_after_round: Option<u64>,
    },
    /// Continue an interrupted run from its last round boundary.
    Resume {
        journal: PathBuf,
        /// Scratch root for executions (default: <journal>.scratch).
        #[arg(long)]
        scratch_dir: Option<PathBuf>,
    },
    /// Export CSV analytics and a summary from a journal.
    Report {
        journal: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
}

/// The config-key table appended to `--help`.
fn keys_help() -> String {
    let keys = documented_keys();
    let width = keys.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (default; description):\n");
    for k in keys {
        out.push_str(&format!("  {:width$}  {} ; {}\n", k.key, k.default, k.help));
    }
    out.push_str("\nEnvironment: TUSO_API_KEY (LLM backend), TUSO_SCHOLAR_API_KEY (optional, paper search).\n");
    out.push_str("Exit codes: 0 ok, 1 all initializations failed, 2 invalid bundle/config, 3 backend unavailable, 4 corrupt journal, 5 other.");
    out
}

fn command() -> clap::Command {
    Cli::command().after_help(keys_help())
}

enum Failure {
    Engine(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Init { bundle } => cmd_init(&bundle),
        Command::Run { config, budget, seed, alpha, warm_start, ablation, max_rounds, clock, stop_after_round } => {
            let mut cfg = ConfigFile::load(&config).map_err(Error::from)?;
            let p = &mut cfg.run.params;
            if let Some(v) = budget {
                p.budget_seconds = v;
            }
            if let Some(v) = seed {
                p.seed = v;
            }
            if let Some(v) = alpha {
                p.alpha = v;
            }
            if !ablation.is_empty() {
                p.ablation = Ablation::from_names(ablation.iter().map(String::as_str)).map_err(Error::from)?;
            }
            if let Some(v) = max_rounds {
                p.max_rounds = Some(v);
            }
            if let Some(v) = clock {
                p.clock = v.parse::<ClockKind>().map_err(Error::from)?;
            }
            if let Some(path) = warm_start {
                cfg.run.warm_start = Some(path);
            }
            let header = header_from_config(&cfg)?;
            let opts = options_from_config(&cfg).stop_after(stop_after_round);
            let result = engine::run(header, &opts)?;
            print_result(&result);
            Ok(())
        }
        Command::Resume { journal: path, scratch_dir } => {
            let mut opts = RunOptions::new(&path);
            if let Some(dir) = scratch_dir {
                opts = opts.with_scratch_dir(dir);
            }
            if let Ok(contents) = journal::read(&path) {
                if let Some(h) = contents.header() {
                    let timeout = Duration::from_secs(h.backend.request_timeout_seconds.max(1));
                    opts = opts.with_transport(Arc::new(UreqTransport::new(timeout)));
                }
            }
            let result = engine::resume(&opts)?;
            print_result(&result);
            Ok(())
        }
        Command::Report { journal: path, out, force } => {
            if !force && dir_has_entries(&out) {
                return Err(Failure::Usage(format!(
                    "output directory {} is not empty; pass --force to write into it",
                    out.display()
                )));
            }
            let files = export_report(&path, &out).map_err(Error::from)?;
            for f in [&files.best_curve, &files.diversity, &files.pi_history, &files.failures, &files.summary] {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn dir_has_entries(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut it| it.next().is_some()).unwrap_or(false)
}

fn print_result(result: &engine::RunResult) {
    let score = result.best.score.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
    let state = if result.finished { "finished" } else { "interrupted" };
    println!("best score {score} (solution {}, {} rounds, {state})", result.best.id, result.rounds);
    println!("journal {}", result.journal.display());
}

/// Check sentinels, command resolution, a dry run of the unmodified template
/// and the score marker, naming the first failing check.
fn cmd_init(path: &Path) -> Result<(), Failure> {
    let bundle = TaskBundle::load(path).map_err(Error::from)?;
    bundle.validate().map_err(Error::from)?;
    bundle.resolve_command().map_err(Error::from)?;
    let scratch = tempfile::tempdir().map_err(Error::from)?;
    let report = Executor::new(scratch.path()).execute(&bundle.template, &bundle).map_err(Error::from)?;
    if report.timed_out {
        return Err(Failure::Usage(format!(
            "DryRunTimeout: template did not finish within {} s",
            bundle.time_limit_seconds
        )));
    }
    match report.score {
        Some(score) => {
            println!("OK, baseline score {score}");
            Ok(())
        }
        None => Err(Failure::Usage(format!(
            "MarkerMissing: dry run printed no parsable score marker ({})\n{}",
            report.status_line(),
            tuso_core::sandbox::tail_chars(&report.stderr, 2000)
        ))),
    }
}
