#ifndef FORENSIC_KG_H
#define FORENSIC_KG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FkgStatus {
  FKG_STATUS_OK = 0,
  FKG_STATUS_NULL_ARGUMENT = 1,
  FKG_STATUS_INVALID_UTF8 = 2,
  FKG_STATUS_INVALID_ARGUMENT = 3,
  FKG_STATUS_NOT_FOUND = 4,
  FKG_STATUS_STAGE_NOT_READY = 5,
  FKG_STATUS_CUSTODY_BREACH = 6,
  FKG_STATUS_ILLEGAL_TRANSITION = 7,
  FKG_STATUS_IO = 8,
  FKG_STATUS_INTERNAL = 9,
} FkgStatus;

/**
 * An opened run directory.
 */
typedef struct FkgRun FkgRun;

/**
 * Counts behind the reliability metrics.
 */
typedef struct FkgTally {
  uint64_t true_extractions;
  uint64_t total_potential_extractions;
  uint64_t tp;
  uint64_t fp;
  uint64_t fn_;
  uint64_t correctly_consolidated;
  uint64_t total_consolidated;
  uint64_t correct_connections;
  uint64_t total_connections;
  uint64_t exact_value_matches;
  uint64_t artifacts_matching_context;
  uint64_t artifacts_with_intact_custody;
  uint64_t total_artifacts;
} FkgTally;

/**
 * Metric values in hundredths of a percent; -1 means undefined.
 */
typedef struct FkgMetrics {
  int64_t eea;
  int64_t eca;
  int64_t kgca;
  int64_t fap;
  int64_t far;
  int64_t faf1;
  int64_t ais;
  int64_t cca;
  int64_t ccs;
} FkgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *fkg_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fkg_string_free(char *s);

/**
 * Opens a run directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum FkgStatus fkg_run_open(const char *dir, struct FkgRun **out);

/**
 * Releases a run handle. Null is ignored.
 *
 * # Safety
 * `run` must come from `fkg_run_open` and not have been freed.
 */
void fkg_run_free(struct FkgRun *run);

/**
 * Stored `graph.json`, verbatim.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum FkgStatus fkg_run_graph_json(const struct FkgRun *run, char **out);

/**
 * Stored metrics report.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum FkgStatus fkg_run_metrics_json(const struct FkgRun *run, char **out);

/**
 * Hypothesis instances with their verdict state.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum FkgStatus fkg_run_hypotheses_json(const struct FkgRun *run, char **out);

/**
 * Source record of `uid`, after re-deriving it.
 *
 * # Safety
 * `run` must be a live handle; `uid` NUL-terminated; `out` writable.
 */
enum FkgStatus fkg_run_provenance_json(const struct FkgRun *run, const char *uid, char **out);

/**
 * Applies a verdict given as JSON
 * `{"edge_id","uid","verdict","reviewer","note"}` and returns the outcome.
 *
 * # Safety
 * `run` must be a live handle; `submission` NUL-terminated; `out` writable.
 */
enum FkgStatus fkg_run_record_verdict(const struct FkgRun *run, const char *submission, char **out);

/**
 * Builds the UID of a source row.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum FkgStatus fkg_make_uid(const char *device_id,
                            const char *file_path,
                            const char *database_name,
                            const char *table_name,
                            uint64_t lid,
                            char **out);

/**
 * Renders an epoch (milliseconds when `millis` is true, else seconds) in
 * the IANA zone `zone`.
 *
 * # Safety
 * `zone` must be NUL-terminated; `out` must be writable.
 */
enum FkgStatus fkg_normalize_timestamp(int64_t epoch, bool millis, const char *zone, char **out);

/**
 * Computes every metric from a tally.
 *
 * # Safety
 * `tally` must be readable and `out` writable.
 */
enum FkgStatus fkg_compute_metrics(const struct FkgTally *tally, struct FkgMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORENSIC_KG_H */
