/* C interface to the tuso program-search engine. */

#ifndef TUSO_H
#define TUSO_H

/* Generated from src/lib.rs by build.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes. Values 1–5 match the `tuso` CLI exit codes.
typedef enum TusoStatus {
  TUSO_STATUS_OK = 0,
  // No initial solution produced a score.
  TUSO_STATUS_ALL_INITIALIZATIONS_FAILED = 1,
  // Invalid bundle, config, prompt assets or argument value.
  TUSO_STATUS_INVALID = 2,
  // The LLM backend could not be reached.
  TUSO_STATUS_BACKEND_UNAVAILABLE = 3,
  // The journal is corrupt or has no header.
  TUSO_STATUS_CORRUPT_JOURNAL = 4,
  // Any other engine failure.
  TUSO_STATUS_FAILED = 5,
  // A required pointer argument was NULL.
  TUSO_STATUS_NULL_ARGUMENT = 6,
  // A string argument was not valid UTF-8.
  TUSO_STATUS_INVALID_UTF8 = 7,
  // The requested value does not exist (e.g. no score marker).
  TUSO_STATUS_NOT_FOUND = 8,
  // An index argument was out of range.
  TUSO_STATUS_OUT_OF_RANGE = 9,
  // The library panicked; the handle involved should be freed.
  TUSO_STATUS_PANIC = 10,
} TusoStatus;

// A loaded task bundle.
typedef struct TusoBundle TusoBundle;

// A category sampler: weights π over named categories, a seeded random
// stream, and multiplicative rewards with renormalization.
typedef struct TusoSampler TusoSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tuso_version(void);

// Message for the calling thread's last failure, or NULL if the last call
// succeeded. Valid until the thread's next call into this library.
const char *tuso_last_error(void);

// Release a string returned through an out-pointer. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void tuso_string_free(char *s);

// Parse the score marker from program output. `TUSO_STATUS_NOT_FOUND` when
// no parsable, finite score line exists.
//
// # Safety
// `stdout_text` must be a NUL-terminated string; `out_score` writable.
enum TusoStatus tuso_parse_score(const char *stdout_text, double *out_score);

// Load and validate a bundle (a directory holding `bundle.toml`, or the
// manifest itself).
//
// # Safety
// `path` must be a NUL-terminated string; `out_bundle` writable.
enum TusoStatus tuso_bundle_load(const char *path, struct TusoBundle **out_bundle);

// Release a bundle. NULL is ignored.
//
// # Safety
// `bundle` must come from [`tuso_bundle_load`] and not have been freed.
void tuso_bundle_free(struct TusoBundle *bundle);

// Full program text with `region` placed between the sentinel lines.
//
// # Safety
// `bundle` must be a live handle, `region` NUL-terminated, `out_program` writable.
enum TusoStatus tuso_bundle_splice(const struct TusoBundle *bundle,
                                   const char *region,
                                   char **out_program);

// The editable region of a full program.
//
// # Safety
// `bundle` must be a live handle, `program` NUL-terminated, `out_region` writable.
enum TusoStatus tuso_bundle_extract_region(const struct TusoBundle *bundle,
                                           const char *program,
                                           char **out_region);

// Splice `region` and execute it in the sandbox under the bundle's time
// limit, with scratch directories created below `scratch_root`.
// `out_timed_out` is always written on `TUSO_STATUS_OK` and
// `TUSO_STATUS_NOT_FOUND`; `out_score` only when a score was printed.
//
// # Safety
// `bundle` must be a live handle; strings NUL-terminated; out-pointers writable.
enum TusoStatus tuso_bundle_evaluate(const struct TusoBundle *bundle,
                                     const char *region,
                                     const char *scratch_root,
                                     double *out_score,
                                     bool *out_timed_out);

// Sampler over `len` categories with the given positive weights
// (normalized internally), drawing from the category stream of `seed`.
//
// # Safety
// `names` and `weights` must point to `len` elements; `out_sampler` writable.
enum TusoStatus tuso_sampler_new(const char *const *names,
                                 const double *weights,
                                 uintptr_t len,
                                 uint64_t seed,
                                 struct TusoSampler **out_sampler);

// Release a sampler. NULL is ignored.
//
// # Safety
// `sampler` must come from [`tuso_sampler_new`] and not have been freed.
void tuso_sampler_free(struct TusoSampler *sampler);

// Number of categories (0 for NULL).
//
// # Safety
// `sampler` must be a live handle or NULL.
uintptr_t tuso_sampler_len(const struct TusoSampler *sampler);

// Draw a category index with probability equal to its weight.
//
// # Safety
// `sampler` must be a live handle; `out_index` writable.
enum TusoStatus tuso_sampler_sample(struct TusoSampler *sampler, uintptr_t *out_index);

// Multiply category `index`'s weight by `factor` and renormalize.
//
// # Safety
// `sampler` must be a live handle.
enum TusoStatus tuso_sampler_reward(struct TusoSampler *sampler, uintptr_t index, double factor);

// Current weight of category `index`.
//
// # Safety
// `sampler` must be a live handle; `out_pi` writable.
enum TusoStatus tuso_sampler_pi(const struct TusoSampler *sampler, uintptr_t index, double *out_pi);

// Windowed TF-IDF diversity of `len` code snippets in generation order,
// written to `out_diversity[0..len]`. Comment and import lines are dropped
// before tokenizing, as in run reports.
//
// # Safety
// `snippets` must point to `len` NUL-terminated strings; `out_diversity`
// must have room for `len` values.
enum TusoStatus tuso_diversity(const char *const *snippets,
                               uintptr_t len,
                               uintptr_t window,
                               double *out_diversity);

// Run the engine from a config file (as `tuso run -c`). Optional
// out-pointers (may be NULL) receive the best score and solution id.
//
// # Safety
// `config_path` must be NUL-terminated; non-NULL out-pointers writable.
enum TusoStatus tuso_run(const char *config_path, double *out_best_score, uint64_t *out_best_id);

// Continue an interrupted run (as `tuso resume`).
//
// # Safety
// `journal_path` must be NUL-terminated; non-NULL out-pointers writable.
enum TusoStatus tuso_resume(const char *journal_path,
                            double *out_best_score,
                            uint64_t *out_best_id);

// Export report files for a journal into `out_dir` (created if missing).
//
// # Safety
// Both arguments must be NUL-terminated strings.
enum TusoStatus tuso_report(const char *journal_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUSO_H */
