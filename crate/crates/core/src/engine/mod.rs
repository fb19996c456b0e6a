//! The optimization control loop: literature and knowledge building,
//! initialization, rounds of diverse-top optimization, checkpoints and resume.

mod setup;

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;

pub use setup::{default_scratch, header_from_config, options_from_config, RunOptions};

use crate::clock::{make_clock, Clock};
use crate::error::{Error, JournalError, LlmError, Result};
use crate::journal::{self, Checkpoint, ExecRecord, Journal, PaperRef, Record, RunHeader};
use crate::knowledge::{
    build_categories, build_instructions, format_feedback, pick_candidates, pick_instruction, Category, FeedbackEntry,
    KnowledgeTree, GENERIC_CATEGORY, SINGLE_CATEGORY,
};
use crate::literature::{query_from_task, refine_summary, search_papers, summarize_abstract, PaperSummary};
use crate::llm::{extract_tagged, Bindings, Completion, Gateway, Llm, PromptLibrary, Tag};
use crate::pool::{Pool, SelectParams, Solution, SolutionId};
use crate::rng::RngStreams;
use crate::sandbox::{format_score, repair_bindings, ExecPurpose, ExecutionReport, Executor, Job, PromptCall, Step};

pub use crate::pool::ActionKind;

/// Instruction-based with probability `alpha`, diagnostic otherwise (one draw).
pub fn select_action<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> ActionKind {
    if rng.random::<f64>() < alpha {
        ActionKind::Instruction
    } else {
        ActionKind::Diagnostic
    }
}

/// `n_top` after `round` completed rounds, given its value before.
pub fn decayed_n_top(n_top: usize, round: u64, period: u64) -> usize {
    if period > 0 && round % period == 0 {
        n_top.saturating_sub(1).max(1)
    } else {
        n_top
    }
}

/// Outcome of [`run`] or [`resume`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Solution,
    pub journal: PathBuf,
    pub rounds: u64,
    /// False when the run was interrupted by `stop_after_round`.
    pub finished: bool,
}

/// Start a fresh run, writing a new journal.
pub fn run(header: RunHeader, opts: &RunOptions) -> Result<RunResult> {
    header.config.validate()?;
    header.bundle.validate()?;
    let journal = Journal::create(&opts.journal)?;
    let mut engine = Engine::new(header, opts, journal, Duration::ZERO)?;
    engine.log(Record::RunStarted { header: Box::new(engine.header.clone()) })?;
    engine.start()
}

/// Continue an interrupted run from its last round boundary.
pub fn resume(opts: &RunOptions) -> Result<RunResult> {
    let contents = journal::read(&opts.journal)?;
    let header = contents.header().cloned().ok_or_else(|| JournalError::MissingHeader(opts.journal.clone()))?;
    if contents.is_finished() {
        let mut pool = Pool::new();
        let mut rounds = 0;
        for r in contents.records() {
            match r {
                Record::Solution { solution } => pool.insert(solution.clone())?,
                Record::RunFinished { rounds: n, .. } => rounds = *n,
                _ => {}
            }
        }
        let best = pool.best()?.clone();
        return Ok(RunResult { best, journal: opts.journal.clone(), rounds, finished: true });
    }
    let Some(cp_index) = contents.last_checkpoint() else {
        log::warn!("journal has no round boundary; restarting the run from the beginning");
        let journal = Journal::open_truncated(&opts.journal, contents.ends[0])?;
        let mut engine = Engine::new(header, opts, journal, Duration::ZERO)?;
        return engine.start();
    };
    let Record::Checkpoint(cp) = &contents.entries[cp_index].record else { unreachable!() };
    if cp_index + 1 < contents.entries.len() || contents.truncated_tail {
        log::warn!("journal continues past the last round boundary (round {}); discarding the partial round", cp.round);
    }
    let mut pool = Pool::new();
    for entry in &contents.entries[..cp_index] {
        if let Record::Solution { solution } = &entry.record {
            pool.insert(solution.clone())?;
        }
    }
    let journal = Journal::open_truncated(&opts.journal, contents.ends[cp_index])?;
    let mut engine = Engine::new(header, opts, journal, Duration::from_millis(cp.elapsed_ms))?;
    engine.restore(cp, pool)?;
    engine.optimize()
}

/// Immutable run context; also the metered LLM used by every step.
struct Ctx {
    header: RunHeader,
    gateway: Gateway,
    journal: Journal,
    clock: Box<dyn Clock>,
    executor: Executor,
    base: Bindings,
    journal_error: Mutex<Option<JournalError>>,
}

impl Llm for Ctx {
    fn complete(&self, asset: &str, bindings: &Bindings) -> Result<Completion, LlmError> {
        let result = self.gateway.complete(asset, bindings);
        self.clock.charge_llm();
        if let Ok(c) = &result {
            let rec = Record::LlmCall { asset: asset.to_string(), attempt: c.attempt, chars: c.text.chars().count() };
            if let Err(e) = self.log(rec) {
                let mut slot = self.journal_error.lock().unwrap_or_else(|e| e.into_inner());
                slot.get_or_insert(e);
            }
        }
        result
    }

    fn library(&self) -> &PromptLibrary {
        self.gateway.library()
    }
}

impl Ctx {
    fn now_ms(&self) -> u64 {
        self.clock.elapsed().as_millis() as u64
    }

    fn log(&self, record: Record) -> Result<(), JournalError> {
        self.journal.append(self.now_ms(), &record)
    }

    fn check_journal(&self) -> Result<()> {
        match self.journal_error.lock().unwrap_or_else(|e| e.into_inner()).take() {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    fn budget_left(&self) -> bool {
        self.clock.elapsed() < self.header.config.budget()
    }

    fn attempt_limit(&self) -> Duration {
        self.header.config.attempt_limit().min(self.header.bundle.time_limit())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gate {
    /// Initialization: allowed while budget remains or nothing has scored yet.
    Init,
    /// Optimization: allowed only while budget remains.
    Budget,
}

/// One job in flight plus what is needed to turn its outcome into a solution.
struct Slot {
    id: SolutionId,
    job: Job,
    parent: Option<Solution>,
    kind: Option<ActionKind>,
    category: Option<String>,
    instruction: String,
    pending: Option<Step>,
}

struct Engine {
    ctx: Ctx,
    header: RunHeader,
    pool: Pool,
    tree: KnowledgeTree,
    rng: RngStreams,
    n_top: usize,
    round: u64,
    next_id: SolutionId,
    stop_after_round: Option<u64>,
    opts: RunOptions,
}

impl Engine {
    fn new(header: RunHeader, opts: &RunOptions, journal: Journal, offset: Duration) -> Result<Self> {
        let gateway = setup::make_gateway(&header, opts)?;
        let b = &header.bundle;
        let mut base = Bindings::new();
        base.insert("task_description".into(), b.task_description.clone());
        base.insert(
            "data_available".into(),
            if b.data_available_note.trim().is_empty() { "the provided dataset".into() } else { b.data_available_note.clone() },
        );
        base.insert("features_sentence".into(), b.features_note.clone());
        base.insert("template".into(), b.template.clone());
        let ctx = Ctx {
            gateway,
            journal,
            clock: make_clock(header.config.clock, offset),
            executor: Executor::new(&opts.scratch_dir),
            base,
            journal_error: Mutex::new(None),
            header: header.clone(),
        };
        Ok(Engine {
            rng: RngStreams::new(header.config.seed),
            ctx,
            header,
            pool: Pool::new(),
            tree: KnowledgeTree::default(),
            n_top: 1,
            round: 0,
            next_id: 0,
            stop_after_round: opts.stop_after_round,
            opts: opts.clone(),
        })
    }

    fn log(&self, record: Record) -> Result<()> {
        self.ctx.log(record)?;
        Ok(())
    }

    fn alloc_id(&mut self) -> SolutionId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Steps 1–3.1, then the optimization loop.
    fn start(&mut self) -> Result<RunResult> {
        let summaries = self.literature()?;
        self.build_tree(&summaries)?;
        self.initialize(&summaries)?;
        self.n_top = self.pool.selectable_count().max(1);
        self.checkpoint()?;
        if self.stop_after_round == Some(0) {
            return self.interrupted();
        }
        self.optimize()
    }

    fn restore(&mut self, cp: &Checkpoint, pool: Pool) -> Result<()> {
        let positions = cp.rng.iter().map(|(s, p)| (*s, u128::from(*p))).collect();
        self.rng = RngStreams::restore(self.header.config.seed, &positions);
        self.ctx.gateway.set_retry_position(u128::from(cp.retry_rng));
        if let Some(cursor) = &cp.backend_cursor {
            self.ctx.gateway.backend().restore(cursor)?;
        }
        self.tree = cp.tree.clone();
        self.pool = pool;
        self.n_top = cp.n_top;
        self.round = cp.round;
        self.next_id = cp.next_id;
        Ok(())
    }

    fn literature(&mut self) -> Result<Vec<PaperSummary>> {
        let cfg = &self.header.config;
        if cfg.ablation.no_knowledge {
            return Ok(Vec::new());
        }
        let opts_source = setup::make_literature(&self.header, &self.opts)?;
        let Some(source) = opts_source else { return Ok(Vec::new()) };
        let query = query_from_task(&self.header.bundle.task_description);
        let papers = search_papers(source.as_ref(), &query, cfg.max_papers);
        self.log(Record::LiteratureSearch {
            query,
            papers: papers.iter().map(|p| PaperRef { title: p.title.clone(), citation_count: p.citation_count }).collect(),
        })?;
        let mut summaries = Vec::new();
        for (rank, paper) in papers.iter().enumerate() {
            let mut summary = summarize_abstract(&self.ctx, paper, cfg.summary_bullets)?;
            for excerpt in &paper.methods_excerpts {
                summary = refine_summary(&self.ctx, &summary, excerpt, cfg.summary_bullets, cfg.excerpt_words)?;
            }
            self.log(Record::PaperSummary { rank: rank + 1, summary: summary.clone() })?;
            summaries.push(summary);
        }
        Ok(summaries)
    }

    fn build_tree(&mut self, summaries: &[PaperSummary]) -> Result<()> {
        let cfg = self.header.config.clone();
        let lib = self.ctx.library();
        if cfg.ablation.no_knowledge {
            let mut generic = Category::new(GENERIC_CATEGORY, 1.0);
            generic.instructions.push(lib.text("generic_instruction").trim().to_string());
            self.tree = KnowledgeTree { categories: vec![generic], diagnostic: Category::new("diagnostic", 0.0), frozen: true };
        } else {
            let mut tree = build_categories(&self.ctx, &self.ctx.base, summaries, cfg.num_categories)?;
            for i in 0..tree.categories.len() {
                build_instructions(
                    &self.ctx,
                    &self.ctx.base,
                    summaries,
                    &mut tree.categories[i],
                    cfg.instructions_per_draft,
                    cfg.instructions_per_summary,
                )?;
            }
            if cfg.ablation.no_categories {
                tree.collapse(SINGLE_CATEGORY);
            }
            tree.frozen = cfg.ablation.no_bayesian;
            self.tree = tree;
        }
        self.ctx.check_journal()?;
        self.log(Record::Tree { reason: "built".into(), tree: self.tree.clone() })
    }

    fn descriptions(&mut self, summaries: &[PaperSummary]) -> Result<Vec<String>> {
        let cfg = &self.header.config;
        let lib = self.ctx.library();
        let examples = lib.list("initialization_examples").join("\n");
        let mut b = self.ctx.base.clone();
        b.insert("num_init".into(), cfg.num_initializations.to_string());
        b.insert("few_shot".into(), examples.clone());
        b.insert(
            "warm_start".into(),
            match &self.header.warm_start {
                Some(code) => format!(
                    "\nWe already have the starting solution below. Propose approaches that could outperform it:\n```\n{code}\n```\n"
                ),
                None => String::new(),
            },
        );
        let reply = self.ctx.complete("initializer_draft", &b)?;
        let mut list: Vec<String> = match extract_tagged(&reply.text, Tag::M) {
            Ok(items) => items,
            Err(_) => {
                log::warn!("initializer draft had no <m> spans; using the example approaches");
                extract_tagged(&examples, Tag::M).unwrap_or_default()
            }
        };
        list.truncate(cfg.num_initializations);
        for summary in summaries {
            let mut b = self.ctx.base.clone();
            b.insert("current".into(), list.iter().map(|d| Tag::M.wrap(d)).collect::<Vec<_>>().join("\n"));
            b.insert("title".into(), summary.title.clone());
            b.insert("bullet_points".into(), summary.bullets.iter().map(|x| format!("- {x}")).collect::<Vec<_>>().join("\n"));
            let reply = self.ctx.complete("initializer_refine", &b)?;
            if let Ok(items) = extract_tagged(&reply.text, Tag::M) {
                list = items;
            }
        }
        let mut unique: Vec<String> = Vec::new();
        for d in list {
            let d = d.split_whitespace().collect::<Vec<_>>().join(" ");
            if !d.is_empty() && !unique.contains(&d) {
                unique.push(d);
            }
        }
        Ok(unique)
    }

    fn initialize(&mut self, summaries: &[PaperSummary]) -> Result<()> {
        if let Some(code) = self.header.warm_start.clone() {
            let program = self.header.bundle.splice(&code)?;
            let id = self.alloc_id();
            let limit = self.ctx.attempt_limit();
            let report = self.ctx.executor.execute_with_limit(&program, &self.header.bundle, limit)?;
            let charged = self.ctx.clock.charge_exec(report.duration(), report.timed_out, limit);
            self.log(Record::Execution {
                round: 0,
                solution_id: id,
                purpose: ExecPurpose::Attempt(1),
                region_chars: code.chars().count(),
                report: ExecRecord::from_report(&report, charged.as_millis() as u64),
            })?;
            let solution = Solution::new(id, code, report.score, report.timed_out).at(0, self.ctx.now_ms());
            self.insert(solution)?;
        }
        let descriptions = self.descriptions(summaries)?;
        self.log(Record::InitDescriptions { descriptions: descriptions.clone() })?;
        let attempts = 1 + self.header.config.init_repair_attempts;
        let limit = self.ctx.attempt_limit();
        let mut slots: Vec<Slot> = Vec::new();
        for d in descriptions {
            let mut b = repair_bindings(&self.header.bundle, &d);
            b.insert("description".into(), d.clone());
            let job = Job::implement(PromptCall::new("implement", b.clone()), b, attempts, limit);
            let id = self.alloc_id();
            slots.push(Slot { id, job, parent: None, kind: None, category: None, instruction: d, pending: None });
        }
        let m = self.header.config.max_parallel_evals.max(1);
        while !slots.is_empty() {
            let rest = slots.split_off(m.min(slots.len()));
            let mut batch = std::mem::replace(&mut slots, rest);
            self.run_jobs(&mut batch, Gate::Init)?;
            for slot in batch {
                self.finish_slot(slot)?;
            }
        }
        if self.pool.selectable_count() == 0 {
            self.log(Record::Note { message: "no initial solution produced a score".into() })?;
            return Err(Error::AllInitializationsFailed);
        }
        Ok(())
    }

    fn insert(&mut self, solution: Solution) -> Result<()> {
        self.log(Record::Solution { solution: solution.clone() })?;
        self.pool.insert(solution)?;
        Ok(())
    }

    fn may_execute(&self, gate: Gate, batch_has_score: bool) -> bool {
        match gate {
            Gate::Budget => self.ctx.budget_left(),
            Gate::Init => self.ctx.budget_left() || (self.pool.selectable_count() == 0 && !batch_has_score),
        }
    }

    /// Drive a batch of jobs: LLM steps in slot order, executions concurrently,
    /// reports delivered and journaled in slot order.
    fn run_jobs(&mut self, slots: &mut [Slot], gate: Gate) -> Result<()> {
        loop {
            for slot in slots.iter_mut() {
                if slot.pending.is_none() && !slot.job.is_done() {
                    match slot.job.advance(&self.ctx, &self.header.bundle)? {
                        Step::Done => {}
                        step => slot.pending = Some(step),
                    }
                }
            }
            self.ctx.check_journal()?;
            let mut runnable: Vec<usize> = Vec::new();
            for i in 0..slots.len() {
                if slots[i].pending.is_none() {
                    continue;
                }
                let has_score = slots.iter().any(|s| s.job.outcome().score.is_some());
                if self.may_execute(gate, has_score) {
                    runnable.push(i);
                } else {
                    slots[i].pending = None;
                    slots[i].job.stop();
                }
            }
            if runnable.is_empty() {
                if slots.iter().all(|s| s.job.is_done()) {
                    return Ok(());
                }
                continue;
            }
            let requests: Vec<(String, Duration)> = runnable
                .iter()
                .map(|&i| match &slots[i].pending {
                    Some(Step::Execute { program, limit, .. }) => (program.clone(), *limit),
                    _ => unreachable!(),
                })
                .collect();
            let reports = self.execute_all(&requests)?;
            for (&i, report) in runnable.iter().zip(reports) {
                let Some(Step::Execute { region, purpose, limit, .. }) = slots[i].pending.take() else { unreachable!() };
                let charged = self.ctx.clock.charge_exec(report.duration(), report.timed_out, limit);
                let rec = ExecRecord::from_report(&report, charged.as_millis() as u64);
                match purpose {
                    ExecPurpose::Instrumented => self.log(Record::DiagnosticRun {
                        round: self.round,
                        parent_id: slots[i].parent.as_ref().map(|p| p.id).unwrap_or_default(),
                        report: Some(rec),
                        note: report.timed_out.then(|| "instrumented run timed out; using partial output".to_string()),
                    })?,
                    ExecPurpose::Attempt(_) => self.log(Record::Execution {
                        round: self.round,
                        solution_id: slots[i].id,
                        purpose,
                        region_chars: region.chars().count(),
                        report: rec,
                    })?,
                }
                slots[i].job.deliver(report);
            }
        }
    }

    fn execute_all(&self, requests: &[(String, Duration)]) -> Result<Vec<ExecutionReport>> {
        let bundle = &self.header.bundle;
        let executor = &self.ctx.executor;
        if requests.len() == 1 {
            let (program, limit) = &requests[0];
            return Ok(vec![executor.execute_with_limit(program, bundle, *limit)?]);
        }
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = requests
                .iter()
                .map(|(program, limit)| scope.spawn(move || executor.execute_with_limit(program, bundle, *limit)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("execution thread panicked")).collect()
        });
        results.into_iter().map(|r| r.map_err(Error::from)).collect()
    }

    /// Turn a finished job into a pooled solution (if anything ran), then
    /// apply reward and feedback for optimization children.
    fn finish_slot(&mut self, slot: Slot) -> Result<()> {
        let outcome = slot.job.outcome().clone();
        if slot.kind == Some(ActionKind::Diagnostic) && outcome.instrumented.is_none() {
            self.log(Record::DiagnosticRun {
                round: self.round,
                parent_id: slot.parent.as_ref().map(|p| p.id).unwrap_or_default(),
                report: None,
                note: outcome.instrument_note.clone().or_else(|| Some("instrumented run not executed".into())),
            })?;
        }
        if outcome.executions == 0 {
            if outcome.stopped {
                self.log(Record::Note { message: format!("solution {} not evaluated: budget exhausted", slot.id) })?;
            }
            return Ok(());
        }
        let timed_out = outcome.report.as_ref().is_some_and(|r| r.timed_out);
        let mut solution = Solution::new(slot.id, outcome.region.clone().unwrap_or_default(), outcome.score, timed_out)
            .at(self.round, self.ctx.now_ms());
        if let (Some(parent), Some(kind)) = (&slot.parent, slot.kind) {
            solution = solution.with_lineage(parent.id, slot.category.clone(), kind);
        }
        self.insert(solution.clone())?;
        let (Some(parent), Some(kind), Some(child_score)) = (slot.parent, slot.kind, solution.score) else {
            return Ok(());
        };
        let parent_score = parent.score.unwrap_or(f64::NEG_INFINITY);
        if kind == ActionKind::Instruction && child_score > parent_score {
            if let Some(category) = &slot.category {
                if self.tree.reward(category, self.header.config.reward_factor) {
                    self.log(Record::Reward { round: self.round, category: category.clone(), pi: self.tree.pis() })?;
                }
            }
        }
        if self.header.config.ablation.no_knowledge {
            return Ok(());
        }
        let mut b = Bindings::new();
        b.insert("instruction".into(), slot.instruction.clone());
        b.insert("parent_code".into(), parent.code.clone());
        b.insert("child_code".into(), solution.code.clone());
        b.insert("parent_score".into(), format_score(parent_score));
        b.insert("child_score".into(), format_score(child_score));
        let reply = self.ctx.complete("feedback", &b)?;
        let text = reply.text.split_whitespace().collect::<Vec<_>>().join(" ");
        let summary = if text.is_empty() {
            format!("{} (score {} -> {})", slot.instruction, format_score(parent_score), format_score(child_score))
        } else {
            text
        };
        let entry = FeedbackEntry { summary, parent_score, child_score, round_index: self.round };
        let ledger = match (kind, &slot.category) {
            (ActionKind::Instruction, Some(c)) => self.tree.category_mut(c),
            _ => Some(&mut self.tree.diagnostic),
        };
        if let Some(ledger) = ledger {
            ledger.feedback.push(entry.clone());
        }
        let category = if kind == ActionKind::Instruction { slot.category.clone() } else { None };
        self.log(Record::Feedback { round: self.round, category, entry })
    }

    fn checkpoint(&mut self) -> Result<()> {
        self.ctx.check_journal()?;
        let rng = self.rng.positions().into_iter().map(|(s, p)| (s, p as u64)).collect();
        let cp = Checkpoint {
            round: self.round,
            n_top: self.n_top,
            next_id: self.next_id,
            elapsed_ms: self.ctx.now_ms(),
            rng,
            retry_rng: self.ctx.gateway.retry_position() as u64,
            backend_cursor: self.ctx.gateway.backend().cursor(),
            tree: self.tree.clone(),
        };
        self.log(Record::Checkpoint(Box::new(cp)))
    }

    fn interrupted(&self) -> Result<RunResult> {
        Ok(RunResult {
            best: self.pool.best()?.clone(),
            journal: self.ctx.journal.path().to_path_buf(),
            rounds: self.round,
            finished: false,
        })
    }

    fn optimize(&mut self) -> Result<RunResult> {
        let cfg = self.header.config.clone();
        let reason = loop {
            if !self.ctx.budget_left() {
                break "budget exhausted";
            }
            if cfg.max_rounds.is_some_and(|max| self.round >= max) {
                break "max_rounds reached";
            }
            self.round += 1;
            self.one_round()?;
            let decayed = decayed_n_top(self.n_top, self.round, cfg.decay_period_rounds);
            if decayed != self.n_top {
                self.n_top = decayed;
                self.log(Record::Decay { round: self.round, n_top: self.n_top })?;
            }
            self.checkpoint()?;
            if self.stop_after_round == Some(self.round) {
                return self.interrupted();
            }
        };
        let best = self.pool.best()?.clone();
        self.log(Record::RunFinished {
            rounds: self.round,
            best_id: best.id,
            best_score: best.score.unwrap_or(f64::NAN),
            reason: reason.to_string(),
        })?;
        Ok(RunResult { best, journal: self.ctx.journal.path().to_path_buf(), rounds: self.round, finished: true })
    }

    fn one_round(&mut self) -> Result<()> {
        let params = SelectParams {
            band: self.header.config.within_best_band,
            rules: self.header.bundle.clean.clone(),
            ..SelectParams::default()
        };
        let tops = self.pool.diverse_top(self.n_top, &mut self.rng.clustering, &params)?;
        let m = self.header.config.max_parallel_evals.max(1);
        for (batch_index, chunk) in tops.chunks(m).enumerate() {
            if !self.ctx.budget_left() {
                break;
            }
            let mut slots = Vec::with_capacity(chunk.len());
            for (offset, parent) in chunk.iter().enumerate() {
                slots.push(self.plan(batch_index * m + offset, parent.clone())?);
            }
            self.run_jobs(&mut slots, Gate::Budget)?;
            for slot in slots {
                self.finish_slot(slot)?;
            }
        }
        Ok(())
    }

    /// Choose the action for one top solution and set up its job.
    fn plan(&mut self, slot_index: usize, parent: Solution) -> Result<Slot> {
        let cfg = self.header.config.clone();
        let diagnostics_allowed = !cfg.ablation.no_diagnosis && !cfg.ablation.no_knowledge;
        let kind = if diagnostics_allowed { select_action(&mut self.rng.action, cfg.alpha) } else { ActionKind::Instruction };
        let attempts = 1 + cfg.optim_repair_attempts;
        let limit = self.ctx.attempt_limit();
        let parent_score = format_score(parent.score.unwrap_or(f64::NAN));
        let mut b = self.ctx.base.clone();
        b.insert("code".into(), parent.code.clone());
        b.insert("score".into(), parent_score);
        let (category, candidates, instruction, asset, job);
        match kind {
            ActionKind::Instruction => {
                let idx = self.tree.sample_index(&mut self.rng.category);
                let cat = self.tree.categories[idx].clone();
                if cfg.ablation.no_knowledge {
                    instruction = cat.instructions.first().cloned().unwrap_or_default();
                    candidates = vec![instruction.clone()];
                    asset = "generic_optimize";
                } else {
                    let (chosen, drawn) =
                        pick_instruction(&mut self.rng.instruction, &cat, cfg.instruction_draw, &self.ctx, &b)?;
                    instruction = chosen;
                    candidates = drawn;
                    asset = "optimize";
                }
                b.insert("instruction".into(), instruction.clone());
                b.insert("feedback".into(), format_feedback(cat.recent_feedback(cfg.feedback_window)));
                let mut repair = b.clone();
                repair.insert("goal".into(), instruction.clone());
                job = Job::implement(PromptCall::new(asset, b), repair, attempts, limit);
                category = Some(cat.name);
            }
            ActionKind::Diagnostic => {
                let drawn = pick_candidates(&mut self.rng.instruction, &self.tree.diagnostic, 1);
                instruction = drawn.first().cloned().unwrap_or_else(|| "by adding diagnostic output".to_string());
                candidates = drawn;
                asset = "diagnostic_improve";
                b.insert("instruction".into(), instruction.clone());
                b.insert("feedback".into(), format_feedback(self.tree.diagnostic.recent_feedback(cfg.feedback_window)));
                let mut repair = b.clone();
                repair.insert("goal".into(), format!("improve the score using diagnostics gathered {instruction}"));
                job = Job::diagnostic(
                    PromptCall::new("diagnostic_instrument", b.clone()),
                    PromptCall::new(asset, b),
                    repair,
                    attempts,
                    limit,
                );
                category = None;
            }
        }
        self.log(Record::Action {
            round: self.round,
            slot: slot_index,
            parent_id: parent.id,
            kind,
            category: category.clone(),
            candidates,
            instruction: instruction.clone(),
            prompt_asset: asset.to_string(),
        })?;
        let id = self.alloc_id();
        Ok(Slot { id, job, parent: Some(parent), kind: Some(kind), category, instruction, pending: None })
    }
}
