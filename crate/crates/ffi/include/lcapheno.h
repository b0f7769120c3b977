#ifndef LCAPHENO_H
#define LCAPHENO_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LCA_OK 0

#define LCA_ERR_NULL 1

#define LCA_ERR_INPUT 2

#define LCA_ERR_OVERWRITE 3

#define LCA_ERR_NUMERICAL 4

#define LCA_ERR_IO 5

#define LCA_ERR_BUFFER 6

#define LCA_ERR_PANIC 7

#define LCA_STOP_MAX_ITERS 0

#define LCA_STOP_REL_TOL 1

#define LCA_STOP_PATIENCE 2

/**
 * A cohort, standardized for fitting, with the path it came from.
 */
typedef struct LcaDataset LcaDataset;

typedef struct LcaGibbsFit LcaGibbsFit;

typedef struct LcaVbFit LcaVbFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t lca_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lca_version(void);

/**
 * Reads a cohort CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a writable pointer.
 */
int lca_dataset_read_csv(const char *path, struct LcaDataset **out);

/**
 * Generates a synthetic cohort. `config_json` may be null for the defaults;
 * `seed` always applies and `n` overrides the size when positive. When
 * `eta_bounds_out` is non-null it receives the two prior bounds under which
 * the generator lies inside the model family.
 *
 * # Safety
 * Pointers must be null or valid as documented.
 */
int lca_synth_generate(const char *config_json,
                       uint64_t seed,
                       size_t n,
                       struct LcaDataset **out,
                       double *eta_bounds_out);

/**
 * Writes the raw (unstandardized) cohort as CSV and remembers the path as
 * the dataset's source.
 *
 * # Safety
 * `dataset` must come from this library; `path` NUL-terminated.
 */
int lca_dataset_write_csv(struct LcaDataset *dataset, const char *path);

/**
 * Number of patients, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t lca_dataset_len(const struct LcaDataset *dataset);

/**
 * Writes `(M, J, K, L)` into `out[0..4]`.
 *
 * # Safety
 * `dataset` must come from this library; `out` must hold 4 values.
 */
int lca_dataset_shape(const struct LcaDataset *dataset, size_t *out);

/**
 * # Safety
 * `dataset` must be null or come from this library, and not be used after.
 */
void lca_dataset_free(struct LcaDataset *dataset);

/**
 * Number of model parameters, with or without the per-patient `η`.
 *
 * # Safety
 * `dataset` must be null or come from this library.
 */
size_t lca_param_count(const struct LcaDataset *dataset, bool include_eta);

/**
 * Per-patient marginal log-likelihoods at a flat parameter vector (full
 * layout including `η`, on the standardized biomarker scale).
 *
 * # Safety
 * `params` must hold `n_params` values and `out` room for `out_len`.
 */
int lca_log_likelihood(const struct LcaDataset *dataset,
                       const double *params,
                       size_t n_params,
                       double *out,
                       size_t out_len);

/**
 * Runs the Gibbs sampler. `options_json` and `priors_json` may be null for
 * defaults; `eta_bounds` (two doubles) may be null.
 *
 * # Safety
 * Pointers must be null or valid as documented.
 */
int lca_gibbs_fit(const struct LcaDataset *dataset,
                  const char *options_json,
                  const char *priors_json,
                  const double *eta_bounds,
                  struct LcaGibbsFit **out);

/**
 * # Safety
 * `fit` must be null or come from this library.
 */
size_t lca_gibbs_chains(const struct LcaGibbsFit *fit);

/**
 * Kept draws per chain.
 *
 * # Safety
 * `fit` must be null or come from this library.
 */
size_t lca_gibbs_draws(const struct LcaGibbsFit *fit);

/**
 * Columns per draw.
 *
 * # Safety
 * `fit` must be null or come from this library.
 */
size_t lca_gibbs_params(const struct LcaGibbsFit *fit);

/**
 * Copies one chain's draws, row-major (`draws × params`).
 *
 * # Safety
 * `buf` must have room for `len` doubles.
 */
int lca_gibbs_copy_chain(const struct LcaGibbsFit *fit, size_t chain, double *buf, size_t len);

/**
 * Persists the fit as a fit directory.
 *
 * # Safety
 * `dir` must be NUL-terminated.
 */
int lca_gibbs_write(const struct LcaGibbsFit *fit, const char *dir, bool force);

/**
 * # Safety
 * `fit` must be null or come from this library, and not be used after.
 */
void lca_gibbs_free(struct LcaGibbsFit *fit);

/**
 * Runs stochastic variational inference; arguments as for [`lca_gibbs_fit`].
 *
 * # Safety
 * Pointers must be null or valid as documented.
 */
int lca_vb_fit(const struct LcaDataset *dataset,
               const char *options_json,
               const char *priors_json,
               const double *eta_bounds,
               struct LcaVbFit **out);

/**
 * Best ELBO, its iteration, and the stop reason (`LCA_STOP_*`).
 *
 * # Safety
 * Out-pointers must be writable.
 */
int lca_vb_result(const struct LcaVbFit *fit,
                  double *best_elbo,
                  size_t *best_iteration,
                  int *stop_reason);

/**
 * Length of the variational mean vector (unconstrained space).
 *
 * # Safety
 * `fit` must be null or come from this library.
 */
size_t lca_vb_dim(const struct LcaVbFit *fit);

/**
 * Copies the variational mean and log-scale (unconstrained space).
 *
 * # Safety
 * Buffers must have room for `len` doubles each.
 */
int lca_vb_copy_state(const struct LcaVbFit *fit, double *mu, double *log_sigma, size_t len);

/**
 * Persists the fit with `n_draws` stored posterior draws.
 *
 * # Safety
 * `dir` must be NUL-terminated.
 */
int lca_vb_write(const struct LcaVbFit *fit, const char *dir, size_t n_draws, bool force);

/**
 * # Safety
 * `fit` must be null or come from this library, and not be used after.
 */
void lca_vb_free(struct LcaVbFit *fit);

/**
 * Split R-hat of `n_chains` consecutive chains of `n_draws` values.
 * `*defined` is set to false (and `*out` to NaN) for zero variance.
 *
 * # Safety
 * `values` must hold `n_chains * n_draws` doubles.
 */
int lca_split_rhat(const double *values,
                   size_t n_chains,
                   size_t n_draws,
                   double *out,
                   bool *defined);

/**
 * Bulk ESS; layout and sentinel as for [`lca_split_rhat`].
 *
 * # Safety
 * `values` must hold `n_chains * n_draws` doubles.
 */
int lca_ess_bulk(const double *values, size_t n_chains, size_t n_draws, double *out, bool *defined);

/**
 * PSIS-LOO of a row-major `draws × patients` log-likelihood matrix. Writes
 * `elpd_loo` and one Pareto k per patient (NaN where no fit was possible).
 *
 * # Safety
 * `loglik` must hold `draws * patients` doubles, `khat` room for `patients`.
 */
int lca_psis_loo(const double *loglik,
                 size_t draws,
                 size_t patients,
                 double *elpd_loo,
                 double *khat);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCAPHENO_H */
