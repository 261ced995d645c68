#ifndef AGEDEBT_H
#define AGEDEBT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AD_STATUS_OK = 0,
  AD_STATUS_CONFIG_ERROR = 1,
  AD_STATUS_RUNTIME_ERROR = 2,
  AD_STATUS_NULL_POINTER = 3,
  AD_STATUS_INVALID_ARGUMENT = 4,
  AD_STATUS_PANIC = 5,
} AdStatus;

/**
 * Parsed experiment config.
 */
typedef struct AdConfig AdConfig;

/**
 * Solved average-cost DP.
 */
typedef struct AdDp AdDp;

/**
 * Metrics of one simulation run.
 */
typedef struct AdMetrics AdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread; empty after a success.
 * The pointer stays valid until the next `ad_*` call on the same thread.
 */
const char *ad_last_error(void);

/**
 * # Safety
 * `s` must be null or come from this library.
 */
void ad_string_free(char *s);

/**
 * Parses TOML config text. On success `*out` owns a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
AdStatus ad_config_parse(const char *text, AdConfig **out);

/**
 * Serializes a config back to TOML.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_config_to_toml(const AdConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a handle from [`ad_config_parse`], freed once.
 */
void ad_config_free(AdConfig *config);

/**
 * Simulates one policy on the config's only scenario. `policy` may be null
 * for the first configured policy; `horizon` 0 keeps the configured one.
 *
 * # Safety
 * `config` must be a live handle, `policy` null or a NUL-terminated
 * string, and `out` a valid pointer.
 */
AdStatus ad_run(const AdConfig *config,
                const char *policy,
                uint64_t seed,
                uint64_t horizon,
                AdMetrics **out);

/**
 * Sum over pairs of time-average cost; NaN for a null handle.
 *
 * # Safety
 * `metrics` must be null or a live handle.
 */
double ad_metrics_sum_cost(const AdMetrics *metrics);

/**
 * # Safety
 * `metrics` must be null or a live handle.
 */
size_t ad_metrics_pair_count(const AdMetrics *metrics);

/**
 * Time-average cost of pair `pair` (zero-based, in flow then destination order).
 *
 * # Safety
 * `metrics` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_metrics_pair_cost(const AdMetrics *metrics, size_t pair, double *out);

/**
 * Time-average age of pair `pair`.
 *
 * # Safety
 * `metrics` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_metrics_pair_age(const AdMetrics *metrics, size_t pair, double *out);

/**
 * Final debt over horizon, `Q(T)/T`, of pair `pair`.
 *
 * # Safety
 * `metrics` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_metrics_q_over_t(const AdMetrics *metrics, size_t pair, double *out);

/**
 * # Safety
 * `metrics` must be null or a handle from [`ad_run`], freed once.
 */
void ad_metrics_free(AdMetrics *metrics);

/**
 * Solves the DP on the config's only scenario, with the options of the
 * first `dp` policy if one is configured.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_dp_solve(const AdConfig *config, uint64_t seed, AdDp **out);

/**
 * Optimal average cost; NaN for a null handle.
 *
 * # Safety
 * `dp` must be null or a live handle.
 */
double ad_dp_average_cost(const AdDp *dp);

/**
 * Number of states in the solved model.
 *
 * # Safety
 * `dp` must be null or a live handle.
 */
size_t ad_dp_state_count(const AdDp *dp);

/**
 * Writes the exported table (state, action index, relative value) as CSV.
 *
 * # Safety
 * `dp` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_dp_table_csv(const AdDp *dp, char **out);

/**
 * # Safety
 * `dp` must be null or a handle from [`ad_dp_solve`], freed once.
 */
void ad_dp_free(AdDp *dp);

/**
 * Number of connected graphs on `n` vertices up to isomorphism, `2 <= n <= 7`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
AdStatus ad_graph_count(size_t n, size_t *out);

/**
 * Runs the full sweep and returns its CSV. `jobs` 0 uses the default
 * thread count. Individual run failures leave empty fields and return
 * `RuntimeError` with the CSV still written.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
AdStatus ad_sweep_csv(const AdConfig *config, size_t jobs, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGEDEBT_H */
