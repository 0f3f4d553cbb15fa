#ifndef DATACTL_H
#define DATACTL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum DcStatus {
  /**
   * Success; for checks, the positive answer (compliant, derivable).
   */
  DC_STATUS_OK = 0,
  /**
   * The call succeeded and the answer is negative.
   */
  DC_STATUS_NEGATIVE = 1,
  /**
   * A null pointer or non-UTF-8 text was passed.
   */
  DC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A document failed to parse.
   */
  DC_STATUS_PARSE_ERROR = 3,
  /**
   * The input is well-formed but cannot be processed.
   */
  DC_STATUS_FAILED = 4,
  /**
   * An internal error was contained at the boundary.
   */
  DC_STATUS_PANIC = 5,
} DcStatus;

/**
 * A parsed or derived architecture.
 */
typedef struct DcArchitecture DcArchitecture;

/**
 * A parsed policy document.
 */
typedef struct DcPolicy DcPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or null. Valid
 * until the next call on the same thread; do not free.
 */
const char *dc_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string returned through an out parameter of this
 * library that has not been freed yet.
 */
void dc_string_free(char *s);

/**
 * Parse a policy document into a new handle.
 *
 * # Safety
 * `source` is a NUL-terminated string; `out` is valid for a write.
 */
enum DcStatus dc_policy_parse(const char *source, struct DcPolicy **out);

/**
 * Release a policy handle. Null is ignored.
 *
 * # Safety
 * `p` is null or a handle from [`dc_policy_parse`] not freed yet.
 */
void dc_policy_free(struct DcPolicy *p);

/**
 * Canonical text of a policy.
 *
 * # Safety
 * `p` is a live handle; `out` is valid for a write.
 */
enum DcStatus dc_policy_serialize(const struct DcPolicy *p, char **out);

/**
 * Check a trace against the policy. Returns `Ok` when compliant and
 * `Negative` when violations were found; the rendered report is written to
 * `report` when it is not null.
 *
 * # Safety
 * `p` is a live handle; `trace` is a NUL-terminated string; `report` is
 * null or valid for a write.
 */
enum DcStatus dc_check_trace(const struct DcPolicy *p, const char *trace, char **report);

/**
 * Derive the architecture of a set of (possibly template) events.
 *
 * # Safety
 * `p` is a live handle; `events` is a NUL-terminated string; `out` is
 * valid for a write.
 */
enum DcStatus dc_derive_architecture(const struct DcPolicy *p,
                                     const char *events,
                                     bool simplify_friends,
                                     struct DcArchitecture **out);

/**
 * Parse an architecture document into a new handle.
 *
 * # Safety
 * `source` is a NUL-terminated string; `out` is valid for a write.
 */
enum DcStatus dc_arch_parse(const char *source, struct DcArchitecture **out);

/**
 * Release an architecture handle. Null is ignored.
 *
 * # Safety
 * `a` is null or a handle from this library not freed yet.
 */
void dc_arch_free(struct DcArchitecture *a);

/**
 * Canonical text of an architecture.
 *
 * # Safety
 * `a` is a live handle; `out` is valid for a write.
 */
enum DcStatus dc_arch_serialize(const struct DcArchitecture *a, char **out);

/**
 * Decide a HAS query by deduction over the architecture and an optional
 * architecture trace (null for the empty trace). Returns `Ok` when
 * derivable and `Negative` otherwise; the rule tree is written to
 * `derivation` when it is not null.
 *
 * # Safety
 * `a` is a live handle; `trace` is null or a NUL-terminated string;
 * `query` is a NUL-terminated string; `derivation` is null or valid for a
 * write.
 */
enum DcStatus dc_eval_has(const struct DcArchitecture *a,
                          const char *trace,
                          const char *query,
                          char **derivation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DATACTL_H */
