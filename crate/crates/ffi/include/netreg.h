#ifndef NETREG_H
#define NETREG_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NetregStatus {
  NETREG_STATUS_OK = 0,
  NETREG_STATUS_INVALID_ARGUMENT = 1,
  NETREG_STATUS_DATA = 2,
  NETREG_STATUS_NUMERICAL = 3,
  NETREG_STATUS_NULL_POINTER = 4,
  NETREG_STATUS_PANIC = 5,
} NetregStatus;

typedef enum NetregVerdict {
  NETREG_VERDICT_NOT_IDENTIFIED = 0,
  NETREG_VERDICT_POSSIBLY_IDENTIFIED = 1,
  NETREG_VERDICT_IDENTIFIED = 2,
  NETREG_VERDICT_WEAKLY_IDENTIFIED = 3,
} NetregVerdict;

typedef enum NetregMethod {
  NETREG_METHOD_CLASSICAL = 0,
  NETREG_METHOD_BIAS_CORRECTED = 1,
  NETREG_METHOD_TIKHONOV = 2,
  NETREG_METHOD_LANDWEBER_FRIDMAN = 3,
  NETREG_METHOD_PRINCIPAL_COMPONENTS = 4,
} NetregMethod;

typedef enum NetregCriterion {
  NETREG_CRITERION_MALLOWS_CP = 0,
  NETREG_CRITERION_GCV = 1,
  NETREG_CRITERION_LEAVE_ONE_OUT = 2,
} NetregCriterion;

typedef struct NetregData NetregData;

typedef struct NetregNetwork NetregNetwork;

typedef struct NetregResult NetregResult;

typedef struct NetregEstimateOptions {
  enum NetregMethod method;
  enum NetregCriterion criterion;
  /**
   * Regularization parameter; NaN selects it by `criterion`.
   */
  double parameter;
  /**
   * Highest power of W in the instrument set; 0 picks it automatically.
   */
  size_t order;
  bool bonacich;
  bool m_lags;
} NetregEstimateOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null.
 */
const char *netreg_last_error(void);

/**
 * Library version as a static string.
 */
const char *netreg_version(void);

/**
 * Builds a network from an edge list. `weight` may be null (unit weights).
 * Nodes are given by `node_group`/`node_id` of length `n_nodes`, or inferred
 * from the edges when both are null. Rows of any data attached later follow
 * nodes sorted by (group, id).
 *
 * # Safety
 * Array arguments must be valid for their stated lengths; `out` must be a
 * valid pointer.
 */
enum NetregStatus netreg_network_from_edges(size_t n_edges,
                                            const uint64_t *group,
                                            const uint64_t *src,
                                            const uint64_t *dst,
                                            const double *weight,
                                            size_t n_nodes,
                                            const uint64_t *node_group,
                                            const uint64_t *node_id,
                                            bool row_normalize,
                                            struct NetregNetwork **out);

/**
 * Random network of `groups` groups of `size` nodes with up to `max_links`
 * out-links per node.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum NetregStatus netreg_network_generate(size_t groups,
                                          size_t size,
                                          size_t max_links,
                                          uint64_t seed,
                                          struct NetregNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from this library.
 */
size_t netreg_network_node_count(const struct NetregNetwork *net);

/**
 * # Safety
 * `net` must be null or a handle from this library.
 */
size_t netreg_network_group_count(const struct NetregNetwork *net);

/**
 * Eigenvalue-count identification check. Requires a symmetric network.
 *
 * # Safety
 * `net` must be a handle from this library; outputs must be valid pointers.
 */
enum NetregStatus netreg_network_identification(const struct NetregNetwork *net,
                                                double tol,
                                                enum NetregVerdict *verdict,
                                                size_t *distinct_eigenvalues);

/**
 * # Safety
 * `net` must be null or a handle from this library not yet freed.
 */
void netreg_network_free(struct NetregNetwork *net);

/**
 * Panel on `net`: `y` has one entry per node, `x1` is `n × k1` and `x2` is
 * `n × k2`, both column-major.
 *
 * # Safety
 * Arrays must be valid for their sizes; `net` must be a live handle.
 */
enum NetregStatus netreg_data_new(const struct NetregNetwork *net,
                                  size_t n,
                                  const double *y,
                                  size_t k1,
                                  const double *x1,
                                  size_t k2,
                                  const double *x2,
                                  struct NetregData **out);

/**
 * # Safety
 * `data` must be null or a handle from this library not yet freed.
 */
void netreg_data_free(struct NetregData *data);

/**
 * Tikhonov with the parameter chosen by Mallows' Cp, automatic instrument
 * order, Bonacich and M-lag columns included.
 */
struct NetregEstimateOptions netreg_estimate_options_default(void);

/**
 * Runs the full estimator. `options` may be null for the defaults.
 *
 * # Safety
 * Handles must be live; `out` must be a valid pointer.
 */
enum NetregStatus netreg_estimate(const struct NetregNetwork *net,
                                  const struct NetregData *data,
                                  const struct NetregEstimateOptions *options,
                                  struct NetregResult **out);

/**
 * Number of coefficients: 1 + k1 + k2.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t netreg_result_dim(const struct NetregResult *r);

/**
 * Writes (λ̂, β̂₁, β̂₂) into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `r` must be a live handle and `buf` valid for `len` writes.
 */
enum NetregStatus netreg_result_coefficients(const struct NetregResult *r, double *buf, size_t len);

/**
 * # Safety
 * `r` must be a live handle and `buf` valid for `len` writes.
 */
enum NetregStatus netreg_result_std_errors(const struct NetregResult *r, double *buf, size_t len);

/**
 * Preliminary ρ̃; NaN for a null handle.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double netreg_result_rho(const struct NetregResult *r);

/**
 * True when the moment objective for ρ̃ was flat and ρ̃ fell back to 0.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
bool netreg_result_rho_degenerate(const struct NetregResult *r);

/**
 * Regularization parameter α of the projector used: the Tikhonov penalty,
 * or the reciprocal of the iteration or component count. The bias-corrected
 * method reports its full principal-components projector. NaN for classical
 * 2SLS.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double netreg_result_alpha(const struct NetregResult *r);

/**
 * The parameter in its natural unit: α for Tikhonov, iterations for
 * Landweber-Fridman, components for principal components. NaN for classical
 * 2SLS.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
double netreg_result_parameter(const struct NetregResult *r);

/**
 * # Safety
 * `r` must be null or a live handle.
 */
double netreg_result_sigma2(const struct NetregResult *r);

/**
 * # Safety
 * `r` must be null or a handle from this library not yet freed.
 */
void netreg_result_free(struct NetregResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETREG_H */
