#ifndef LEGTRACK_H
#define LEGTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum LtStatus {
  LT_STATUS_OK = 0,
  LT_STATUS_NULL_ARGUMENT = 1,
  LT_STATUS_INVALID_UTF8 = 2,
  LT_STATUS_DEGENERATE_GEOMETRY = 3,
  LT_STATUS_INSUFFICIENT_MARKERS = 4,
  LT_STATUS_FIT_REJECTED = 5,
  LT_STATUS_INVALID_RIGID_BODY = 6,
  LT_STATUS_UNKNOWN_POINT = 7,
  LT_STATUS_MISSING_FRAME = 8,
  LT_STATUS_INVALID_BONE_VECTOR = 9,
  LT_STATUS_DEGENERATE_PROJECTION = 10,
  LT_STATUS_INVALID_PARAMS = 11,
  LT_STATUS_OUT_OF_RANGE = 12,
  LT_STATUS_PARSE_ERROR = 13,
  LT_STATUS_NON_MONOTONIC_TIME = 14,
  LT_STATUS_CONFIG_ERROR = 15,
  LT_STATUS_IO_ERROR = 16,
  LT_STATUS_PANIC = 17,
} LtStatus;

/**
 * Coordinate plane for [`lt_projected_angle`].
 */
typedef enum LtPlane {
  LT_PLANE_YZ = 0,
  LT_PLANE_XZ = 1,
  LT_PLANE_XY = 2,
} LtPlane;

/**
 * Opaque tracking session.
 */
typedef struct LtSession LtSession;

/**
 * Rigid transform: row-major rotation and translation in mm.
 */
typedef struct LtTransform {
  double rotation[9];
  double translation[3];
} LtTransform;

typedef struct LtVec3 {
  double x;
  double y;
  double z;
} LtVec3;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * `out = a ∘ b` (apply `b` first).
 *
 * # Safety
 * Pointers must be valid for reads (`a`, `b`) and writes (`out`).
 */
enum LtStatus lt_transform_compose(const struct LtTransform *a,
                                   const struct LtTransform *b,
                                   struct LtTransform *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum LtStatus lt_transform_invert(const struct LtTransform *t, struct LtTransform *out);

/**
 * Maps point `p` from the child frame of `t` into its parent frame.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LtStatus lt_transform_apply(const struct LtTransform *t,
                                 const struct LtVec3 *p,
                                 struct LtVec3 *out);

/**
 * Frame at marker `h` with z toward marker `g` and y near `y_hint`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LtStatus lt_frame_from_marker_pair(const struct LtVec3 *h,
                                        const struct LtVec3 *g,
                                        const struct LtVec3 *y_hint,
                                        struct LtTransform *out);

/**
 * Condyle frame at `c` from hip centre `b` and neck point `k`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LtStatus lt_condyle_frame(const struct LtVec3 *b,
                               const struct LtVec3 *k,
                               const struct LtVec3 *c,
                               struct LtTransform *out);

/**
 * Signed angle in degrees between `v` and its projection onto `plane`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum LtStatus lt_projected_angle(const struct LtVec3 *v, enum LtPlane plane, double *out_deg);

/**
 * Creates a session from a JSON configuration.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum LtStatus lt_session_from_json(const char *config_json, struct LtSession **out);

/**
 * Releases a session. Null is ignored.
 *
 * # Safety
 * `session` must come from [`lt_session_from_json`] and not be used afterwards.
 */
void lt_session_free(struct LtSession *session);

/**
 * Angle report (JSON) for a marker stream given as CSV text.
 *
 * # Safety
 * `session` must be live, `csv` NUL-terminated, `out_json` writable.
 */
enum LtStatus lt_session_run_csv(const struct LtSession *session, const char *csv, char **out_json);

/**
 * Per-sample poses and frames (JSON) for a marker stream given as CSV text.
 *
 * # Safety
 * As for [`lt_session_run_csv`].
 */
enum LtStatus lt_session_track_csv(const struct LtSession *session,
                                   const char *csv,
                                   char **out_json);

/**
 * Cross-route report (JSON). `point`, `route_a` and `route_b` (such as
 * `"E"`, `"M"`, `"H>C>D"`) may each be null to use the configured value.
 *
 * # Safety
 * As for [`lt_session_run_csv`]; non-null strings must be NUL-terminated.
 */
enum LtStatus lt_session_consistency_csv(const struct LtSession *session,
                                         const char *csv,
                                         const char *point,
                                         const char *route_a,
                                         const char *route_b,
                                         char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void lt_string_free(char *s);

/**
 * Message for the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *lt_last_error_message(void);

/**
 * Library version, static string.
 */
const char *lt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEGTRACK_H */
