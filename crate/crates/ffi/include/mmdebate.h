#ifndef MMDEBATE_H
#define MMDEBATE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

enum MmdStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  MMD_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MMD_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  MMD_STATUS_INVALID_UTF8 = 2,
  /**
   * A JSON argument did not parse into the expected shape.
   */
  MMD_STATUS_INVALID_JSON = 3,
  /**
   * An argument parsed but failed validation.
   */
  MMD_STATUS_INVALID_ARGUMENT = 4,
  /**
   * The debate state machine rejected the call.
   */
  MMD_STATUS_PROTOCOL = 5,
  /**
   * The judge answered neither Yes nor No.
   */
  MMD_STATUS_JUDGE_UNDECIDED = 6,
  /**
   * The debate has already been finalized.
   */
  MMD_STATUS_FINISHED = 7,
  /**
   * An internal panic was caught at the boundary.
   */
  MMD_STATUS_INTERNAL = 99,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum MmdStatus MmdStatus;
#else
typedef int32_t MmdStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum MmdStance
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  MMD_STANCE_NO = 0,
  MMD_STANCE_YES = 1,
  MMD_STANCE_UNSURE = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum MmdStance MmdStance;
#else
typedef int32_t MmdStance;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum MmdRegion
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  MMD_REGION_CENTER = 0,
  MMD_REGION_TOP_LEFT = 1,
  MMD_REGION_TOP_RIGHT = 2,
  MMD_REGION_BOTTOM_LEFT = 3,
  MMD_REGION_BOTTOM_RIGHT = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum MmdRegion MmdRegion;
#else
typedef int32_t MmdRegion;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque debate handle.
 */
typedef struct MmdDebate MmdDebate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into the library on the same
 * thread.
 */
const char *mmd_last_error_message(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void mmd_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mmd_version(void);

/**
 * Stance from the first sentence of a model reply.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
MmdStatus mmd_parse_stance(const char *text, MmdStance *out);

/**
 * Region of a normalized point; both coordinates must lie in [0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
MmdStatus mmd_region_of(double cx, double cy, MmdRegion *out);

/**
 * Metrics report for a JSON array of result records.
 *
 * # Safety
 * `results_json` must be a NUL-terminated string; `out_json` must be
 * writable. The returned string is owned by the caller.
 */
MmdStatus mmd_metrics_compute(const char *results_json, char **out_json);

/**
 * Yes-ratio over POPE-C records as a percentage; NaN when nothing was
 * answered.
 *
 * # Safety
 * `results_json` must be a NUL-terminated string; `out` must be writable.
 */
MmdStatus mmd_creativity_ratio(const char *results_json, double *out);

/**
 * Start a debate. `config_json` may be null for the default configuration.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable. Release
 * the handle with [`mmd_debate_free`].
 */
MmdStatus mmd_debate_new(const char *item_json, const char *config_json, struct MmdDebate **out);

/**
 * The next action as JSON, tagged by `kind`.
 *
 * # Safety
 * `debate` must be a live handle; `out_json` must be writable.
 */
MmdStatus mmd_debate_next_action(struct MmdDebate *debate, char **out_json);

/**
 * Record one turn. The handle is unchanged when the turn is rejected.
 *
 * # Safety
 * `debate` must be a live handle; `turn_json` must be NUL-terminated.
 */
MmdStatus mmd_debate_apply_turn(struct MmdDebate *debate, const char *turn_json);

/**
 * Nonzero once the debate has been finalized.
 *
 * # Safety
 * `debate` must be a live handle or null.
 */
int32_t mmd_debate_is_done(const struct MmdDebate *debate);

/**
 * Finish the debate and write its outcome as JSON. `judge_stance_json` may
 * be null; it is only consulted when the judge's turn was not recorded.
 * Calling again returns the same outcome.
 *
 * # Safety
 * `debate` must be a live handle; `out_json` must be writable.
 */
MmdStatus mmd_debate_outcome(struct MmdDebate *debate,
                             const char *judge_stance_json,
                             char **out_json);

/**
 * Current state snapshot as JSON.
 *
 * # Safety
 * `debate` must be a live handle; `out_json` must be writable.
 */
MmdStatus mmd_debate_state(struct MmdDebate *debate, char **out_json);

/**
 * Release a debate handle. Null is ignored.
 *
 * # Safety
 * `debate` must be null or a handle from [`mmd_debate_new`], freed once.
 */
void mmd_debate_free(struct MmdDebate *debate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMDEBATE_H */
