#ifndef CDNSIM_H
#define CDNSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CdnStatus {
  CDN_STATUS_OK = 0,
  /**
   * Invalid input data or configuration.
   */
  CDN_STATUS_INVALID = 1,
  /**
   * Server count outside `1..=sites` or search space too large.
   */
  CDN_STATUS_INFEASIBLE = 2,
  CDN_STATUS_IO = 3,
  /**
   * A required pointer argument was null or a string was not UTF-8.
   */
  CDN_STATUS_BAD_ARGUMENT = 4,
  /**
   * Internal panic; the library state is unchanged.
   */
  CDN_STATUS_PANIC = 5,
} CdnStatus;

typedef enum CdnPolicy {
  CDN_POLICY_LRU = 0,
  CDN_POLICY_LRU2 = 1,
  CDN_POLICY_LFU = 2,
  CDN_POLICY_LIRS = 3,
  CDN_POLICY_BELADY = 4,
} CdnPolicy;

typedef enum CdnStrategy {
  CDN_STRATEGY_DISTANCE = 0,
  CDN_STRATEGY_CORRELATION = 1,
} CdnStrategy;

/**
 * Opaque topology plus distances and user groups.
 */
typedef struct CdnModel CdnModel;

/**
 * Opaque network graph.
 */
typedef struct CdnTopology CdnTopology;

typedef struct CdnCacheStats {
  uint64_t requests;
  uint64_t hits;
  uint64_t misses;
  uint64_t cold_misses;
  double miss_ratio;
} CdnCacheStats;

typedef struct CdnSimSummary {
  struct CdnCacheStats cache;
  double max_user_distance;
  double avg_user_distance;
  double network_load;
} CdnSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *cdn_last_error(void);

/**
 * Library version as a static string.
 */
const char *cdn_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void cdn_string_free(char *s);

/**
 * Loads a GraphML file, a JSON topology dump, or `random:NODES:EDGES[:SEED]`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must be writable.
 */
enum CdnStatus cdn_topology_load(const char *spec, struct CdnTopology **out);

/**
 * # Safety
 * `t` must be a valid handle.
 */
size_t cdn_topology_node_count(const struct CdnTopology *t);

/**
 * # Safety
 * `t` must be null or a handle from [`cdn_topology_load`], not yet freed.
 */
void cdn_topology_free(struct CdnTopology *t);

/**
 * One Zipf user group per node of `t`. The topology handle is copied and
 * stays owned by the caller.
 *
 * # Safety
 * `t` must be a valid handle; `out` must be writable.
 */
enum CdnStatus cdn_model_zipf(const struct CdnTopology *t,
                              double alpha,
                              size_t universe,
                              size_t profile_size,
                              uint64_t seed,
                              struct CdnModel **out);

/**
 * User groups from a `node_id,service_id,count` CSV file.
 *
 * # Safety
 * `t` must be a valid handle, `path` NUL-terminated, `out` writable.
 */
enum CdnStatus cdn_model_trace(const struct CdnTopology *t,
                               const char *path,
                               struct CdnModel **out);

/**
 * # Safety
 * `m` must be null or a model handle, not yet freed.
 */
void cdn_model_free(struct CdnModel *m);

/**
 * Rank correlation of two probability vectors of length `n >= 2`, each
 * summing to one.
 *
 * # Safety
 * `p` and `q` must point to `n` readable doubles; `out` must be writable.
 */
enum CdnStatus cdn_spearman(const double *p, const double *q, size_t n, double *out);

/**
 * Replays `len` item ids through a fresh cache.
 *
 * # Safety
 * `trace` must point to `len` readable values (or be null with `len == 0`);
 * `out` must be writable.
 */
enum CdnStatus cdn_cache_replay(const uint64_t *trace,
                                size_t len,
                                enum CdnPolicy policy,
                                size_t capacity,
                                struct CdnCacheStats *out);

/**
 * Dragoon placement of `k` servers; `placement_json` receives the sorted
 * server id list as JSON.
 *
 * # Safety
 * `m` must be a valid handle; the out pointers must be writable.
 */
enum CdnStatus cdn_place(const struct CdnModel *m,
                         size_t k,
                         char **placement_json,
                         double *max_dist,
                         double *avg_dist);

/**
 * Correlation greedy from closest assignment on `placement_json`, then
 * relocation. `assignment_json` receives a user-to-server JSON object.
 *
 * # Safety
 * `m` must be a valid handle, `placement_json` NUL-terminated, out
 * pointers writable.
 */
enum CdnStatus cdn_assign(const struct CdnModel *m,
                          const char *placement_json,
                          char **assignment_json,
                          double *total_corr);

/**
 * Optimizes `k` servers with `strategy` and simulates the result.
 *
 * # Safety
 * `m` must be a valid handle; `out` must be writable.
 */
enum CdnStatus cdn_simulate(const struct CdnModel *m,
                            size_t k,
                            enum CdnStrategy strategy,
                            enum CdnPolicy policy,
                            size_t capacity,
                            size_t requests_per_user,
                            uint64_t seed,
                            struct CdnSimSummary *out);

/**
 * Distance/correlation front as CSV text (same columns as the CLI's
 * `front.csv`); `points` receives the number of rows.
 *
 * # Safety
 * `m` must be a valid handle; the out pointers must be writable.
 */
enum CdnStatus cdn_pareto(const struct CdnModel *m,
                          size_t k,
                          size_t steps,
                          uint64_t seed,
                          char **csv,
                          size_t *points);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDNSIM_H */
