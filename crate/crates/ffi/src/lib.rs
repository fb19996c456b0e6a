//! C ABI for the tuso engine.
//!
//! Conventions:
//! - Every fallible function returns a [`TusoStatus`]; results go through
//!   out-pointers that are written only on success.
//! - On failure, [`tuso_last_error`] returns a message for the calling
//!   thread, valid until that thread's next call into this library.
//! - Objects are opaque handles created by `*_new`/`*_load` and released by
//!   the matching `*_free`. Strings returned through out-pointers are owned
//!   by the caller and released with [`tuso_string_free`].
//! - Panics never cross the boundary; they surface as `TUSO_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use tuso_core::analytics::{clean_code, export_report, tfidf_embed, trajectory_diversity, CleanRules};
use tuso_core::config::ConfigFile;
use tuso_core::engine::{self, header_from_config, options_from_config, RunOptions, RunResult};
use tuso_core::knowledge::KnowledgeTree;
use tuso_core::rng::{stream_rng, Stream, StreamRng};
use tuso_core::sandbox::{parse_score, Executor, TaskBundle};

/// Result codes. Values 1–5 match the `tuso` CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TusoStatus {
    Ok = 0,
    /// No initial solution produced a score.
    AllInitializationsFailed = 1,
    /// Invalid bundle, config, prompt assets or argument value.
    Invalid = 2,
    /// The LLM backend could not be reached.
    BackendUnavailable = 3,
    /// The journal is corrupt or has no header.
    CorruptJournal = 4,
    /// Any other engine failure.
    Failed = 5,
    /// A required pointer argument was NULL.
    NullArgument = 6,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 7,
    /// The requested value does not exist (e.g. no score marker).
    NotFound = 8,
    /// An index argument was out of range.
    OutOfRange = 9,
    /// The library panicked; the handle involved should be freed.
    Panic = 10,
}

/// A loaded task bundle.
pub struct TusoBundle {
    inner: TaskBundle,
}

/// A category sampler: weights π over named categories, a seeded random
/// stream, and multiplicative rewards with renormalization.
pub struct TusoSampler {
    tree: KnowledgeTree,
    rng: StreamRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(TusoStatus, String);

impl From<tuso_core::Error> for Failure {
    fn from(e: tuso_core::Error) -> Self {
        let status = match e.exit_code() {
            1 => TusoStatus::AllInitializationsFailed,
            2 => TusoStatus::Invalid,
            3 => TusoStatus::BackendUnavailable,
            4 => TusoStatus::CorruptJournal,
            _ => TusoStatus::Failed,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `body`, translating failures and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TusoStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TusoStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            TusoStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TusoStatus::NullArgument, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure(TusoStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(TusoStatus::Invalid, "string contains NUL".into()))
}

unsafe fn str_array<'a>(ptr: *const *const c_char, len: usize, what: &str) -> Result<Vec<&'a str>, Failure> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    std::slice::from_raw_parts(ptr, len).iter().map(|p| str_arg(*p, what)).collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tuso_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the calling thread's last failure, or NULL if the last call
/// succeeded. Valid until the thread's next call into this library.
#[no_mangle]
pub extern "C" fn tuso_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned through an out-pointer. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn tuso_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse the score marker from program output. `TUSO_STATUS_NOT_FOUND` when
/// no parsable, finite score line exists.
///
/// # Safety
/// `stdout_text` must be a NUL-terminated string; `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_parse_score(stdout_text: *const c_char, out_score: *mut f64) -> TusoStatus {
    guard(|| {
        let text = str_arg(stdout_text, "stdout_text")?;
        let out = out_arg(out_score, "out_score")?;
        match parse_score(text) {
            Some(score) => {
                *out = score;
                Ok(())
            }
            None => Err(Failure(TusoStatus::NotFound, "no score marker".into())),
        }
    })
}

/// Load and validate a bundle (a directory holding `bundle.toml`, or the
/// manifest itself).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_bundle` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_bundle_load(path: *const c_char, out_bundle: *mut *mut TusoBundle) -> TusoStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out_bundle, "out_bundle")?;
        let inner = TaskBundle::load(Path::new(path)).map_err(tuso_core::Error::from)?;
        inner.validate().map_err(tuso_core::Error::from)?;
        *out = Box::into_raw(Box::new(TusoBundle { inner }));
        Ok(())
    })
}

/// Release a bundle. NULL is ignored.
///
/// # Safety
/// `bundle` must come from [`tuso_bundle_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tuso_bundle_free(bundle: *mut TusoBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Full program text with `region` placed between the sentinel lines.
///
/// # Safety
/// `bundle` must be a live handle, `region` NUL-terminated, `out_program` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_bundle_splice(
    bundle: *const TusoBundle,
    region: *const c_char,
    out_program: *mut *mut c_char,
) -> TusoStatus {
    guard(|| {
        let b = handle(bundle, "bundle")?;
        let region = str_arg(region, "region")?;
        let out = out_arg(out_program, "out_program")?;
        let program = b.inner.splice(region).map_err(tuso_core::Error::from)?;
        *out = owned_string(program)?;
        Ok(())
    })
}

/// The editable region of a full program.
///
/// # Safety
/// `bundle` must be a live handle, `program` NUL-terminated, `out_region` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_bundle_extract_region(
    bundle: *const TusoBundle,
    program: *const c_char,
    out_region: *mut *mut c_char,
) -> TusoStatus {
    guard(|| {
        let b = handle(bundle, "bundle")?;
        let program = str_arg(program, "program")?;
        let out = out_arg(out_region, "out_region")?;
        let region = b.inner.extract_region(program).map_err(tuso_core::Error::from)?;
        *out = owned_string(region)?;
        Ok(())
    })
}

/// Splice `region` and execute it in the sandbox under the bundle's time
/// limit, with scratch directories created below `scratch_root`.
/// `out_timed_out` is always written on `TUSO_STATUS_OK` and
/// `TUSO_STATUS_NOT_FOUND`; `out_score` only when a score was printed.
///
/// # Safety
/// `bundle` must be a live handle; strings NUL-terminated; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_bundle_evaluate(
    bundle: *const TusoBundle,
    region: *const c_char,
    scratch_root: *const c_char,
    out_score: *mut f64,
    out_timed_out: *mut bool,
) -> TusoStatus {
    guard(|| {
        let b = handle(bundle, "bundle")?;
        let region = str_arg(region, "region")?;
        let root = str_arg(scratch_root, "scratch_root")?;
        let score = out_arg(out_score, "out_score")?;
        let timed_out = out_arg(out_timed_out, "out_timed_out")?;
        let program = b.inner.splice(region).map_err(tuso_core::Error::from)?;
        let report = Executor::new(root).execute(&program, &b.inner).map_err(tuso_core::Error::from)?;
        *timed_out = report.timed_out;
        match report.score {
            Some(s) => {
                *score = s;
                Ok(())
            }
            None => Err(Failure(TusoStatus::NotFound, format!("no score: {}", report.status_line()))),
        }
    })
}

/// Sampler over `len` categories with the given positive weights
/// (normalized internally), drawing from the category stream of `seed`.
///
/// # Safety
/// `names` and `weights` must point to `len` elements; `out_sampler` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_new(
    names: *const *const c_char,
    weights: *const f64,
    len: usize,
    seed: u64,
    out_sampler: *mut *mut TusoSampler,
) -> TusoStatus {
    guard(|| {
        let out = out_arg(out_sampler, "out_sampler")?;
        let names = str_array(names, len, "names")?;
        if len == 0 {
            return Err(Failure(TusoStatus::Invalid, "a sampler needs at least one category".into()));
        }
        if weights.is_null() {
            return Err(null("weights"));
        }
        let weights = std::slice::from_raw_parts(weights, len);
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Failure(TusoStatus::Invalid, "weights must be finite and positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if !names.iter().all(|n| seen.insert(*n)) {
            return Err(Failure(TusoStatus::Invalid, "category names must be distinct".into()));
        }
        let pairs: Vec<(String, f64)> = names.iter().map(|n| n.to_string()).zip(weights.iter().copied()).collect();
        let tree = KnowledgeTree::from_weights(&pairs, &[]);
        *out = Box::into_raw(Box::new(TusoSampler { tree, rng: stream_rng(seed, Stream::Category) }));
        Ok(())
    })
}

/// Release a sampler. NULL is ignored.
///
/// # Safety
/// `sampler` must come from [`tuso_sampler_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_free(sampler: *mut TusoSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Number of categories (0 for NULL).
///
/// # Safety
/// `sampler` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_len(sampler: *const TusoSampler) -> usize {
    sampler.as_ref().map_or(0, |s| s.tree.categories.len())
}

/// Draw a category index with probability equal to its weight.
///
/// # Safety
/// `sampler` must be a live handle; `out_index` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_sample(sampler: *mut TusoSampler, out_index: *mut usize) -> TusoStatus {
    guard(|| {
        let s = handle_mut(sampler, "sampler")?;
        let out = out_arg(out_index, "out_index")?;
        *out = s.tree.sample_index(&mut s.rng);
        Ok(())
    })
}

/// Multiply category `index`'s weight by `factor` and renormalize.
///
/// # Safety
/// `sampler` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_reward(sampler: *mut TusoSampler, index: usize, factor: f64) -> TusoStatus {
    guard(|| {
        let s = handle_mut(sampler, "sampler")?;
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Failure(TusoStatus::Invalid, "factor must be finite and positive".into()));
        }
        let name = s
            .tree
            .categories
            .get(index)
            .map(|c| c.name.clone())
            .ok_or_else(|| Failure(TusoStatus::OutOfRange, format!("index {index} out of range")))?;
        s.tree.reward(&name, factor);
        Ok(())
    })
}

/// Current weight of category `index`.
///
/// # Safety
/// `sampler` must be a live handle; `out_pi` writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_sampler_pi(sampler: *const TusoSampler, index: usize, out_pi: *mut f64) -> TusoStatus {
    guard(|| {
        let s = handle(sampler, "sampler")?;
        let out = out_arg(out_pi, "out_pi")?;
        let c = s.tree.categories.get(index).ok_or_else(|| Failure(TusoStatus::OutOfRange, format!("index {index} out of range")))?;
        *out = c.pi;
        Ok(())
    })
}

/// Windowed TF-IDF diversity of `len` code snippets in generation order,
/// written to `out_diversity[0..len]`. Comment and import lines are dropped
/// before tokenizing, as in run reports.
///
/// # Safety
/// `snippets` must point to `len` NUL-terminated strings; `out_diversity`
/// must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn tuso_diversity(
    snippets: *const *const c_char,
    len: usize,
    window: usize,
    out_diversity: *mut f64,
) -> TusoStatus {
    guard(|| {
        let codes = str_array(snippets, len, "snippets")?;
        if len == 0 {
            return Ok(());
        }
        if out_diversity.is_null() {
            return Err(null("out_diversity"));
        }
        let rules = CleanRules::default();
        let corpus: Vec<Vec<String>> = codes.iter().map(|c| clean_code(c, &rules)).collect();
        let points = trajectory_diversity(&tfidf_embed(&corpus), window);
        let out = std::slice::from_raw_parts_mut(out_diversity, len);
        for (slot, p) in out.iter_mut().zip(points) {
            *slot = p.diversity;
        }
        Ok(())
    })
}

fn write_result(result: &RunResult, out_score: *mut f64, out_id: *mut u64) {
    unsafe {
        if let Some(s) = out_score.as_mut() {
            *s = result.best.score.unwrap_or(f64::NAN);
        }
        if let Some(id) = out_id.as_mut() {
            *id = result.best.id;
        }
    }
}

/// Run the engine from a config file (as `tuso run -c`). Optional
/// out-pointers (may be NULL) receive the best score and solution id.
///
/// # Safety
/// `config_path` must be NUL-terminated; non-NULL out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_run(config_path: *const c_char, out_best_score: *mut f64, out_best_id: *mut u64) -> TusoStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let cfg = ConfigFile::load(Path::new(path)).map_err(tuso_core::Error::from)?;
        let header = header_from_config(&cfg)?;
        let result = engine::run(header, &options_from_config(&cfg))?;
        write_result(&result, out_best_score, out_best_id);
        Ok(())
    })
}

/// Continue an interrupted run (as `tuso resume`).
///
/// # Safety
/// `journal_path` must be NUL-terminated; non-NULL out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn tuso_resume(journal_path: *const c_char, out_best_score: *mut f64, out_best_id: *mut u64) -> TusoStatus {
    guard(|| {
        let path = str_arg(journal_path, "journal_path")?;
        let result = engine::resume(&RunOptions::new(PathBuf::from(path)))?;
        write_result(&result, out_best_score, out_best_id);
        Ok(())
    })
}

/// Export report files for a journal into `out_dir` (created if missing).
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn tuso_report(journal_path: *const c_char, out_dir: *const c_char) -> TusoStatus {
    guard(|| {
        let journal = str_arg(journal_path, "journal_path")?;
        let dir = str_arg(out_dir, "out_dir")?;
        export_report(Path::new(journal), Path::new(dir)).map_err(tuso_core::Error::from)?;
        Ok(())
    })
}
