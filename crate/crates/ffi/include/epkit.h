#ifndef EPKIT_H
#define EPKIT_H

/* Generated by cbindgen from epkit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; zero is success, anything else names the failure class.
 */
typedef enum {
  EPK_STATUS_OK = 0,
  EPK_STATUS_NULL_POINTER = 1,
  EPK_STATUS_INVALID_UTF8 = 2,
  EPK_STATUS_INVALID_ARGUMENT = 3,
  EPK_STATUS_DATA_ERROR = 4,
  EPK_STATUS_NUMERIC_ERROR = 5,
} EpkStatus;

/**
 * Response kind tag.
 */
typedef enum {
  EPK_KIND_DCR = 0,
  EPK_KIND_ACEP = 1,
} EpkKind;

/**
 * Test sidedness. One-sided alternatives state the first sample's
 * direction relative to the second.
 */
typedef enum {
  EPK_TAILS_TWO = 0,
  EPK_TAILS_LESS = 1,
  EPK_TAILS_GREATER = 2,
} EpkTails;

/**
 * Opaque averaged evoked potential.
 */
typedef struct EpkEvoked EpkEvoked;

/**
 * Opaque recording session.
 */
typedef struct EpkSession EpkSession;

/**
 * Waveform metrics; missing optional quantities come back as NaN.
 */
typedef struct {
  double t_zc1_ms;
  double t_zc2_ms;
  double w_n1_ms;
  double whq_n1_ms;
  double n1_latency_ms;
  double n1_maxamp_uv;
  double area_40_100_uvms;
  double min_slope_50_80_uv_per_ms;
  /**
   * 1 when an after-positivity follows the N1 (negative minimum slope).
   */
  int32_t after_positivity;
  /**
   * 1 when the polarity normalization flipped the trace.
   */
  int32_t inverted;
} EpkMetrics;

/**
 * Statistic, p-value and context for one test; df is NaN when undefined.
 */
typedef struct {
  double statistic;
  double p_value;
  double df;
  size_t n;
} EpkTestResult;

/**
 * Least-squares fit summary.
 */
typedef struct {
  double slope;
  double intercept;
  double r_squared;
  size_t n;
} EpkRegression;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *epk_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 * The returned session must be released with [`epk_session_free`].
 */
EpkStatus epk_session_load(const char *path, EpkSession **out);

/**
 * Generate a synthetic session from the built-in kernel presets.
 * `delay_ms` overrides the preset conduction delay when non-negative.
 *
 * # Safety
 * `out` must be a valid pointer; release the session with
 * [`epk_session_free`].
 */
EpkStatus epk_session_simulate(EpkKind kind,
                               double delay_ms,
                               uint32_t pulses,
                               uint64_t seed,
                               EpkSession **out);

/**
 * Artifact excision, 50 Hz template subtraction and band-pass with default
 * settings; produces a new session handle.
 *
 * # Safety
 * `session` must be a live handle from this library; `out` must be valid.
 */
EpkStatus epk_session_preprocess(const EpkSession *session, EpkSession **out);

/**
 * Write the session as `session.toml` + `signal.f32` under `dir`.
 *
 * # Safety
 * `session` must be a live handle; `dir` a NUL-terminated string.
 */
EpkStatus epk_session_save(const EpkSession *session, const char *dir);

/**
 * # Safety
 * `session` must be a live handle or NULL; it must not be used afterwards.
 */
void epk_session_free(EpkSession *session);

/**
 * # Safety
 * `session` must be a live handle; `out` a valid pointer.
 */
EpkStatus epk_session_fs_hz(const EpkSession *session, double *out);

/**
 * # Safety
 * `session` must be a live handle; `out` a valid pointer.
 */
EpkStatus epk_session_channel_count(const EpkSession *session, size_t *out);

/**
 * # Safety
 * `session` must be a live handle; `out` a valid pointer.
 */
EpkStatus epk_session_train_count(const EpkSession *session, size_t *out);

/**
 * Extract, baseline-correct and average the epochs of one channel/train.
 *
 * # Safety
 * `session` must be a live handle; `out` a valid pointer. Release the
 * result with [`epk_evoked_free`].
 */
EpkStatus epk_session_average(const EpkSession *session,
                              size_t channel_index,
                              size_t train_index,
                              EpkEvoked **out);

/**
 * # Safety
 * `evoked` must be a live handle or NULL; it must not be used afterwards.
 */
void epk_evoked_free(EpkEvoked *evoked);

/**
 * Borrow the trace. The pointer belongs to the handle and stays valid until
 * `epk_evoked_free`.
 *
 * # Safety
 * All pointers must be valid; `evoked` must be a live handle.
 */
EpkStatus epk_evoked_trace(const EpkEvoked *evoked, const double **data, size_t *len);

/**
 * Time of the first trace sample relative to the pulse onset, ms.
 *
 * # Safety
 * `evoked` must be a live handle; `out` valid.
 */
EpkStatus epk_evoked_start_ms(const EpkEvoked *evoked, double *out);

/**
 * # Safety
 * `evoked` must be a live handle; `out` valid.
 */
EpkStatus epk_evoked_fs_hz(const EpkEvoked *evoked, double *out);

/**
 * Full waveform metrics (200 Hz zero-phase low-pass applied internally).
 *
 * # Safety
 * `evoked` must be a live handle; `out` valid.
 */
EpkStatus epk_evoked_metrics(const EpkEvoked *evoked, EpkMetrics *out);

/**
 * Predicted conduction delay (ms) for a myelinated fiber:
 * distance / (6 x diameter).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
EpkStatus epk_hursh_predicted_delay_ms(double diameter_um, double distance_mm, double *out);

/**
 * Straight-line conduction velocity (m/s) from distance (mm) and a
 * positive delay (ms).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
EpkStatus epk_velocity_from_delay_mps(double distance_mm, double delay_ms, double *out);

/**
 * Paired Student t on two equal-length arrays.
 *
 * # Safety
 * `a` and `b` must point to `len` readable doubles; `out` must be valid.
 */
EpkStatus epk_paired_t_test(const double *a,
                            const double *b,
                            size_t len,
                            EpkTails tails,
                            EpkTestResult *out);

/**
 * Wilcoxon-Mann-Whitney rank test; the statistic is U of the first sample.
 *
 * # Safety
 * `a`/`b` must point to `na`/`nb` readable doubles; `out` must be valid.
 */
EpkStatus epk_rank_sum(const double *a,
                       size_t na,
                       const double *b,
                       size_t nb,
                       EpkTails tails,
                       EpkTestResult *out);

/**
 * Shapiro-Wilk normality test (upper-tail p), 3 <= n <= 50.
 *
 * # Safety
 * `x` must point to `n` readable doubles; `out` must be valid.
 */
EpkStatus epk_shapiro_wilk(const double *x, size_t n, EpkTestResult *out);

/**
 * Ordinary least squares of y on x.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be valid.
 */
EpkStatus epk_linear_regression(const double *x, const double *y, size_t n, EpkRegression *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPKIT_H */
