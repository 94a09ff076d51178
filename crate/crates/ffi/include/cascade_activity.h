#ifndef CASCADE_ACTIVITY_H
#define CASCADE_ACTIVITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Direction bins per block.
 */
#define CA_DIRECTIONS 8

/**
 * Minutes in a day; valid store slots are `0..CA_MINUTES_PER_DAY`.
 */
#define CA_MINUTES_PER_DAY 1440

typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_POINTER = 1,
  CA_STATUS_INVALID_PARAMETER = 2,
  CA_STATUS_REJECTED_INPUT = 3,
  CA_STATUS_INVALID_INPUT = 4,
  CA_STATUS_QUERY = 5,
  CA_STATUS_CORRUPT = 6,
  CA_STATUS_IO = 7,
  CA_STATUS_BUFFER_TOO_SMALL = 8,
  CA_STATUS_INTERNAL = 9,
} CaStatus;

/**
 * Opaque cascade filter plus per-minute store learner.
 */
typedef struct CaFilter CaFilter;

/**
 * Opaque event gate.
 */
typedef struct CaGate CaGate;

/**
 * Opaque isochronal store.
 */
typedef struct CaStore CaStore;

typedef struct CaBandParams {
  double t_l1_s;
  double t_l2_days;
  double t_s1_s;
  double t_s2_s;
  double frame_rate;
  double shortterm_rate;
} CaBandParams;

typedef struct CaGateParams {
  double k_sigma;
  double cooldown_s;
  double min_threshold;
  uint32_t min_days;
  double reinvoke_every_s;
} CaGateParams;

/**
 * Motion features of one block, laid out as in the library.
 */
typedef struct CaBlock {
  double density;
  double dir_hist[CA_DIRECTIONS];
} CaBlock;

/**
 * Result of one gate tick.
 */
typedef struct CaDecision {
  bool fire;
  bool onset;
  double activity;
  double threshold;
} CaDecision;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string and returns the full message length in bytes,
 * excluding the terminator. The copy is truncated when `len` is too small;
 * pass `buf = NULL` to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ca_last_error_message(char *buf, size_t len);

/**
 * Static description of a status code.
 */
const char *ca_status_str(enum CaStatus status);

/**
 * Filter coefficient that decays an impulse to 10% after `duration`
 * time units at `rate` samples per unit.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum CaStatus ca_alpha_from_decay(double rate, double duration, double *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum CaStatus ca_band_params_default(struct CaBandParams *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum CaStatus ca_gate_params_default(struct CaGateParams *out);

/**
 * Creates a cascade filter for a `grid_w` x `grid_h` block grid.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum CaStatus ca_filter_new(size_t grid_w,
                            size_t grid_h,
                            const struct CaBandParams *params,
                            struct CaFilter **out);

/**
 * # Safety
 * `filter` must be null or a handle from [`ca_filter_new`] not yet freed.
 */
void ca_filter_free(struct CaFilter *filter);

/**
 * Feeds one frame of `n_blocks` row-major blocks. Each non-null output
 * buffer receives `n_blocks` blocks of the matching band; `short_tick`
 * reports whether the short-term bands were recomputed. When `store` is
 * non-null the frame's `m_L1` is also learned into it, one update per
 * completed minute.
 *
 * # Safety
 * `filter` must be a live handle, `blocks` must point to `n_blocks`
 * readable blocks, each non-null output must have room for `n_blocks`
 * blocks, and `store` must be null or a live store handle.
 */
enum CaStatus ca_filter_step(struct CaFilter *filter,
                             uint64_t timestamp_ms,
                             const struct CaBlock *blocks,
                             size_t n_blocks,
                             struct CaStore *store,
                             struct CaBlock *m_l1,
                             struct CaBlock *m_s1,
                             struct CaBlock *m_s2,
                             bool *short_tick);

/**
 * Flushes the pending minute of learned `m_L1` into `store`.
 *
 * # Safety
 * `filter` and `store` must be live handles.
 */
enum CaStatus ca_filter_flush(struct CaFilter *filter, struct CaStore *store);

/**
 * Filter multiplies per fully-updated tick and filter state frames.
 *
 * # Safety
 * `filter` must be a live handle; outputs may be null.
 */
enum CaStatus ca_filter_counters(const struct CaFilter *filter,
                                 uint64_t *multiplies,
                                 uint64_t *state_frames,
                                 uint64_t *full_ticks);

/**
 * Creates an empty store whose slots forget to 10% after `t_l2_days`.
 *
 * # Safety
 * `camera_id` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CaStatus ca_store_new(const char *camera_id,
                           size_t grid_w,
                           size_t grid_h,
                           double t_l2_days,
                           struct CaStore **out);

/**
 * Loads a store file written by [`ca_store_persist`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CaStatus ca_store_load(const char *path, struct CaStore **out);

/**
 * Atomically writes the store to `path`.
 *
 * # Safety
 * `store` must be a live handle and `path` a NUL-terminated string.
 */
enum CaStatus ca_store_persist(const struct CaStore *store, const char *path);

/**
 * # Safety
 * `store` must be null or a handle not yet freed.
 */
void ca_store_free(struct CaStore *store);

/**
 * Folds one sample into minute slot `minute`.
 *
 * # Safety
 * `store` must be a live handle and `blocks` must point to `n_blocks`
 * readable blocks.
 */
enum CaStatus ca_store_update(struct CaStore *store,
                              size_t minute,
                              const struct CaBlock *blocks,
                              size_t n_blocks);

/**
 * Reads slot `minute`: per-block mean and standard deviation into the
 * non-null buffers of `n_blocks` blocks, and the number of days observed.
 *
 * # Safety
 * `store` must be a live handle; each non-null buffer must have room for
 * `n_blocks` blocks.
 */
enum CaStatus ca_store_query(const struct CaStore *store,
                             size_t minute,
                             struct CaBlock *mean,
                             struct CaBlock *std,
                             size_t n_blocks,
                             uint32_t *days_observed);

/**
 * Creates an event gate ticking every `tick_ms` milliseconds. The
 * detector behind it is a stub that reports no persons; only its
 * invocations are counted.
 *
 * # Safety
 * `camera_id` must be a NUL-terminated string; `params` and `out` valid
 * pointers.
 */
enum CaStatus ca_gate_new(const char *camera_id,
                          const struct CaGateParams *params,
                          uint64_t tick_ms,
                          struct CaGate **out);

/**
 * # Safety
 * `gate` must be null or a handle not yet freed.
 */
void ca_gate_free(struct CaGate *gate);

/**
 * Gates one short-term tick against the store statistics of the minute
 * containing `timestamp_ms`.
 *
 * # Safety
 * `gate` and `store` must be live handles, `m_s1`/`m_s2` must point to
 * `n_blocks` readable blocks and `out` must be valid.
 */
enum CaStatus ca_gate_push(struct CaGate *gate,
                           const struct CaStore *store,
                           uint64_t timestamp_ms,
                           const struct CaBlock *m_s1,
                           const struct CaBlock *m_s2,
                           size_t n_blocks,
                           struct CaDecision *out);

/**
 * Detector invocations so far.
 *
 * # Safety
 * `gate` must be a live handle and `out` valid.
 */
enum CaStatus ca_gate_invocations(const struct CaGate *gate, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CASCADE_ACTIVITY_H */
