#ifndef PBSI_H
#define PBSI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Energy arrival law of a [`PbsiSensor`].
 */
#define PBSI_ENERGY_BERNOULLI 0

#define PBSI_ENERGY_POISSON 1

/**
 * Tracker outcomes for [`pbsi_tracker_update`].
 */
#define PBSI_OUTCOME_NO_TX 0

#define PBSI_OUTCOME_SUCCESS 1

#define PBSI_OUTCOME_FAILURE 2

/**
 * Status codes.
 */
typedef enum PbsiStatus {
  PBSI_STATUS_OK = 0,
  PBSI_STATUS_NULL_POINTER = 1,
  PBSI_STATUS_INVALID_ARGUMENT = 2,
  PBSI_STATUS_NOT_CONVERGED = 3,
  PBSI_STATUS_BOUND_UNDEFINED = 4,
  PBSI_STATUS_PROTOCOL = 5,
  PBSI_STATUS_INTERNAL = 6,
} PbsiStatus;

/**
 * Opaque CN policy.
 */
typedef struct PbsiCnPolicy PbsiCnPolicy;

/**
 * Opaque noiseless-channel optimal policy.
 */
typedef struct PbsiNoPolicy PbsiNoPolicy;

/**
 * Parameters of one sensor.
 */
typedef struct PbsiSensor {
  uint32_t battery_capacity;
  uint32_t max_aocsi;
  double weight;
  double request_prob;
  double channel_success;
  /**
   * `PBSI_ENERGY_BERNOULLI` or `PBSI_ENERGY_POISSON`.
   */
  int32_t energy_kind;
  /**
   * Bernoulli probability or Poisson mean.
   */
  double energy_param;
} PbsiSensor;

/**
 * Inferred battery state kept by the edge node.
 */
typedef struct PbsiTracker {
  uint32_t b_hat;
  uint64_t delta;
  double d;
} PbsiTracker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated,
 * truncated to `len`) into `buf`. Returns the full message length in
 * bytes, excluding the terminator. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t pbsi_last_error_message(char *buf, size_t len);

/**
 * Fills `out` with the default sensor (capacity 15, max AoCSI 48,
 * weight 1, Bernoulli arrivals with probability `lambda`).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PbsiStatus pbsi_sensor_default(double lambda, double eta, double xi, struct PbsiSensor *out);

/**
 * Clipped mean energy arrival rate of a sensor.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_clipped_mean(const struct PbsiSensor *sensor, double *out);

/**
 * Lower bound on the average cost and the rate separating its branches.
 *
 * # Safety
 * `theta` and `lambda0_out` must be valid for writes.
 */
enum PbsiStatus pbsi_lower_bound(double lambda,
                                 double eta,
                                 double xi,
                                 uint32_t max_aocsi,
                                 double *theta,
                                 double *lambda0_out);

/**
 * Advances a tracker by one slot. `outcome` is one of the
 * `PBSI_OUTCOME_*` constants; `reported_battery` is read on success only.
 *
 * # Safety
 * Pointers must be valid; `out` may alias `state`.
 */
enum PbsiStatus pbsi_tracker_update(const struct PbsiSensor *sensor,
                                    const struct PbsiTracker *state,
                                    bool commanded,
                                    int32_t outcome,
                                    uint32_t reported_battery,
                                    struct PbsiTracker *out);

/**
 * Solves the post-update values and builds a CN policy.
 *
 * # Safety
 * `sensor` must be valid; `out` must be valid for writes.
 */
enum PbsiStatus pbsi_cn_policy_new(const struct PbsiSensor *sensor, struct PbsiCnPolicy **out);

/**
 * Releases a CN policy. Null is ignored.
 *
 * # Safety
 * `policy` must come from [`pbsi_cn_policy_new`] and not be used again.
 */
void pbsi_cn_policy_free(struct PbsiCnPolicy *policy);

/**
 * Action (0 or 1) for the given request flag and tracker.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_cn_policy_decide(const struct PbsiCnPolicy *policy,
                                      bool request,
                                      const struct PbsiTracker *state,
                                      uint8_t *action);

/**
 * Value difference between updating now and at the next request slot;
 * negative means update.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_cn_policy_delta_v(const struct PbsiCnPolicy *policy,
                                       uint32_t b_hat,
                                       uint64_t delta,
                                       double *out);

/**
 * Per-slot gain estimate behind the CN policy.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_cn_policy_gain(const struct PbsiCnPolicy *policy, double *out);

/**
 * Solves the noiseless-channel MDP. The sensor's channel success
 * probability must be 1. `max_aofbl = 0` uses the sensor's max AoCSI.
 *
 * # Safety
 * `sensor` must be valid; `out` must be valid for writes.
 */
enum PbsiStatus pbsi_no_policy_new(const struct PbsiSensor *sensor,
                                   uint32_t max_aofbl,
                                   struct PbsiNoPolicy **out);

/**
 * Releases a noiseless policy. Null is ignored.
 *
 * # Safety
 * `policy` must come from [`pbsi_no_policy_new`] and not be used again.
 */
void pbsi_no_policy_free(struct PbsiNoPolicy *policy);

/**
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_no_policy_decide(const struct PbsiNoPolicy *policy,
                                      bool request,
                                      const struct PbsiTracker *state,
                                      uint8_t *action);

/**
 * Optimal average cost of the noiseless problem.
 *
 * # Safety
 * Pointers must be valid.
 */
enum PbsiStatus pbsi_no_policy_gain(const struct PbsiNoPolicy *policy, double *out);

/**
 * Simulates one sensor under a named policy (`"cn"`, `"no"`, `"oft"`, ...)
 * and reports the mean cost per slot and its standard error.
 *
 * # Safety
 * `sensor` and `policy` (NUL-terminated) must be valid; outputs must be
 * valid for writes.
 */
enum PbsiStatus pbsi_simulate_single(const struct PbsiSensor *sensor,
                                     const char *policy,
                                     uint64_t horizon,
                                     uint64_t episodes,
                                     uint64_t seed,
                                     double *mean_cost,
                                     double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PBSI_H */
