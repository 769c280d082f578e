#ifndef DSVM_H
#define DSVM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsvmMethod {
  DSVM_METHOD_EULER = 0,
  DSVM_METHOD_RK4 = 1,
} DsvmMethod;

typedef enum DsvmPartition {
  DSVM_PARTITION_CONTIGUOUS = 0,
  DSVM_PARTITION_ROUND_ROBIN = 1,
} DsvmPartition;

typedef enum DsvmStatus {
  DSVM_STATUS_OK = 0,
  DSVM_STATUS_NULL_POINTER = 1,
  DSVM_STATUS_INVALID_ARGUMENT = 2,
  DSVM_STATUS_GRAPH_ERROR = 3,
  DSVM_STATUS_DATA_ERROR = 4,
  DSVM_STATUS_PROBLEM_ERROR = 5,
  DSVM_STATUS_INTEGRATOR_ERROR = 6,
  DSVM_STATUS_ORACLE_ERROR = 7,
  DSVM_STATUS_BUFFER_TOO_SMALL = 8,
  DSVM_STATUS_PANIC = 99,
} DsvmStatus;

/**
 * Distributed problem: partitioned data, graph and penalty.
 */
typedef struct DsvmProblem DsvmProblem;

/**
 * Outcome of [`dsvm_run_flow`].
 */
typedef struct DsvmRun DsvmRun;

/**
 * Integration settings. Obtain defaults from [`dsvm_flow_options_default`].
 */
typedef struct DsvmFlowOptions {
  double step_size;
  uint64_t max_steps;
  double stop_tol;
  uint64_t record_every;
  enum DsvmMethod method;
} DsvmFlowOptions;

/**
 * Scalar results of a finished run.
 */
typedef struct DsvmRunSummary {
  bool converged;
  uint64_t steps;
  double final_field_norm;
  double objective;
  double kkt_max_residual;
  double consensus_residual;
  double lyapunov;
} DsvmRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dsvm_last_error_message(void);

struct DsvmFlowOptions dsvm_flow_options_default(void);

/**
 * Builds a problem from row-major `features` (`n_samples × dim`), labels in
 * {−1, +1}, and `n_edges` node pairs stored flat in `edges`.
 *
 * # Safety
 * `features` must point to `n_samples * dim` doubles, `labels` to
 * `n_samples` doubles, `edges` to `2 * n_edges` values (may be NULL when
 * `n_edges` is 0), and `out` must be writable.
 */
enum DsvmStatus dsvm_problem_new(const double *features,
                                 const double *labels,
                                 size_t n_samples,
                                 size_t dim,
                                 size_t nodes,
                                 const size_t *edges,
                                 size_t n_edges,
                                 enum DsvmPartition strategy,
                                 double c,
                                 struct DsvmProblem **out);

/**
 * # Safety
 * `problem` must come from [`dsvm_problem_new`] and not be used afterwards.
 */
void dsvm_problem_free(struct DsvmProblem *problem);

/**
 * Algebraic connectivity of the problem's graph.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum DsvmStatus dsvm_problem_lambda2(const struct DsvmProblem *problem, double *out);

/**
 * Integrates the flow from the zero state.
 *
 * # Safety
 * `problem` must be a live handle, `options` readable (NULL selects the
 * defaults) and `out` writable.
 */
enum DsvmStatus dsvm_run_flow(const struct DsvmProblem *problem,
                              const struct DsvmFlowOptions *options,
                              struct DsvmRun **out);

/**
 * # Safety
 * `run` must come from [`dsvm_run_flow`] and not be used afterwards.
 */
void dsvm_run_free(struct DsvmRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum DsvmStatus dsvm_run_summary(const struct DsvmRun *run, struct DsvmRunSummary *out);

/**
 * Copies node `node`'s final `w` (`w_len` must be at least the feature
 * dimension) and `b`.
 *
 * # Safety
 * `run` must be a live handle, `w_out` writable for `w_len` doubles and
 * `b_out` writable.
 */
enum DsvmStatus dsvm_run_node_weights(const struct DsvmRun *run,
                                      size_t node,
                                      double *w_out,
                                      size_t w_len,
                                      double *b_out);

/**
 * The run's trace as CSV text. Free with [`dsvm_string_free`].
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum DsvmStatus dsvm_run_trace_csv(const struct DsvmRun *run, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void dsvm_string_free(char *s);

/**
 * Exact centralized solution on the problem's data, C and node count.
 *
 * # Safety
 * `problem` must be a live handle, `w_out` writable for `w_len` doubles,
 * `b_out` and `objective_out` writable.
 */
enum DsvmStatus dsvm_oracle_solve(const struct DsvmProblem *problem,
                                  double *w_out,
                                  size_t w_len,
                                  double *b_out,
                                  double *objective_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSVM_H */
