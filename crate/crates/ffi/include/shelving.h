#ifndef SHELVING_H
#define SHELVING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShelvingStatus {
  SHELVING_STATUS_OK = 0,
  SHELVING_STATUS_NULL_POINTER = 1,
  /**
   * Bad argument, configuration or input file.
   */
  SHELVING_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The simulation or fit failed at run time.
   */
  SHELVING_STATUS_RUNTIME = 3,
  /**
   * A_M1 could not be fitted: no point in the asymptotic regime.
   */
  SHELVING_STATUS_NON_IDENTIFIABLE = 4,
  SHELVING_STATUS_PANIC = 5,
} ShelvingStatus;

/**
 * Opaque result of a blinded SPAM campaign.
 */
typedef struct ShelvingCampaign ShelvingCampaign;

/**
 * Opaque run configuration.
 */
typedef struct ShelvingConfig ShelvingConfig;

/**
 * Binomial estimate with a Wilson interval.
 */
typedef struct ShelvingEstimate {
  uint64_t k;
  uint64_t n;
  double p_hat;
  double ci_low;
  double ci_high;
} ShelvingEstimate;

/**
 * A_M1 fit result, all rates in rad/s.
 */
typedef struct ShelvingM1Fit {
  double a_m1;
  double stat_low;
  double stat_high;
  double systematic;
  double low;
  double high;
  bool upper_limit_only;
} ShelvingM1Fit;

typedef struct ShelvingCampaignSummary {
  uint64_t detect_cutoff;
  uint64_t doppler_cutoff;
  struct ShelvingEstimate zero_inaccuracy;
  struct ShelvingEstimate one_inaccuracy;
  struct ShelvingEstimate avg_inaccuracy;
  struct ShelvingEstimate avg_infidelity;
  uint64_t flagged;
  uint64_t restarts;
} ShelvingCampaignSummary;

/**
 * Manifold codes match the declaration order of the core enum.
 */
typedef struct ShelvingShot {
  uint64_t index;
  /**
   * 0 or 1.
   */
  uint8_t prepared;
  uint8_t classified;
  bool storage_flagged;
  uint32_t restarts;
  uint64_t pre_doppler_counts;
  uint64_t detect_counts;
  uint64_t post_doppler_counts;
  /**
   * 0 S_F0, 1 S_F1, 2 D52, 3 D32_F1, 4 D32_F2, 5 F72, 6 LOST.
   */
  uint8_t final_manifold;
} ShelvingShot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or "" after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *shelving_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *shelving_version(void);

/**
 * Closed-form shelving error after `t` seconds. `a_m1` is in rad/s.
 */
enum ShelvingStatus shelving_error_closed_form(double t,
                                               double zeta,
                                               double tau_d,
                                               double a_m1,
                                               double *out);

/**
 * Smallest cutoff c with P(Poisson(dark_mean) ≥ c) ≤ bound.
 */
enum ShelvingStatus shelving_detection_threshold(double dark_mean, double bound, uint64_t *out);

/**
 * Largest cutoff c with P(Poisson(cooling_mean) < c) ≤ bound.
 */
enum ShelvingStatus shelving_doppler_threshold(double cooling_mean, double bound, uint64_t *out);

enum ShelvingStatus shelving_wilson_interval(uint64_t k,
                                             uint64_t n,
                                             double z,
                                             struct ShelvingEstimate *out);

/**
 * Fits A_M1 to `len` scan points with the default atomic constants.
 * The interval is at `z` sigma, statistics and constants combined.
 */
enum ShelvingStatus shelving_fit_a_m1(const double *times,
                                      const uint64_t *errors,
                                      const uint64_t *trials,
                                      size_t len,
                                      double z,
                                      struct ShelvingM1Fit *out);

/**
 * Creates a configuration with built-in defaults.
 */
enum ShelvingStatus shelving_config_default(struct ShelvingConfig **out);

/**
 * Parses and validates a TOML configuration. `*out` is untouched on failure.
 */
enum ShelvingStatus shelving_config_from_toml(const char *toml, struct ShelvingConfig **out);

enum ShelvingStatus shelving_config_set_seed(struct ShelvingConfig *cfg, uint64_t seed);

/**
 * Shots per prepared state for the SPAM campaign.
 */
enum ShelvingStatus shelving_config_set_shots(struct ShelvingConfig *cfg, uint64_t n_per_state);

/**
 * Releases a configuration. Null is a no-op.
 */
void shelving_config_free(struct ShelvingConfig *cfg);

/**
 * Runs a CLI command (`spam`, `scan`, `rb`, `budget`, `two-ion`) and
 * writes its artifacts to `out_dir`. Nothing is written on failure.
 */
enum ShelvingStatus shelving_run_command(const struct ShelvingConfig *cfg,
                                         const char *command,
                                         const char *out_dir);

/**
 * Calibrates, freezes thresholds and runs the campaign described by `cfg`.
 */
enum ShelvingStatus shelving_campaign_run(const struct ShelvingConfig *cfg,
                                          struct ShelvingCampaign **out);

enum ShelvingStatus shelving_campaign_summary(const struct ShelvingCampaign *c,
                                              struct ShelvingCampaignSummary *out);

/**
 * Number of shot records; 0 for a null handle.
 */
size_t shelving_campaign_len(const struct ShelvingCampaign *c);

enum ShelvingStatus shelving_campaign_shot(const struct ShelvingCampaign *c,
                                           size_t i,
                                           struct ShelvingShot *out);

/**
 * Releases a campaign. Null is a no-op.
 */
void shelving_campaign_free(struct ShelvingCampaign *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHELVING_H */
