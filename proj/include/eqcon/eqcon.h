/* eqcon - efficient estimation under equality constraints.
 *
 * C interface to the estimation core. All objects are opaque handles created
 * and destroyed by the library; every function returns a status code and
 * writes results through caller-owned buffers. Matrices are dense
 * row-major double arrays. Handles are not thread-safe to mutate
 * concurrently, but distinct handles can be used from distinct threads;
 * eqcon_last_error() is per-thread.
 */
#ifndef EQCON_H
#define EQCON_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EQCON_API __declspec(dllexport)
#else
#define EQCON_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eqcon_status {
  EQCON_OK = 0,
  /* malformed input: bad dimensions, non-finite values, domain violations */
  EQCON_ERR_INVALID = 1,
  /* numerical degeneracy: rank deficiency, loss of positive definiteness */
  EQCON_ERR_NUMERICAL = 2,
  /* iteration stopped without reaching tolerance; outputs hold the best
   * iterate found */
  EQCON_ERR_NO_CONVERGENCE = 3,
  /* unexpected internal failure */
  EQCON_ERR_INTERNAL = 4
} eqcon_status;

/* Message describing the most recent failure on this thread. Never NULL;
 * empty when no failure has occurred. Valid until the next failing call on
 * the same thread. */
EQCON_API const char* eqcon_last_error(void);

EQCON_API const char* eqcon_version(void);

/* ------------------------------------------------------------------ */
/* Constraints                                                         */
/* ------------------------------------------------------------------ */

typedef struct eqcon_constraint eqcon_constraint;

/* User-supplied constraint callbacks. Both receive theta of length k and
 * write their result to out (length d for eval, d*k row-major for the
 * Jacobian). Return 0 on success; any other value aborts the evaluation
 * and surfaces as EQCON_ERR_NUMERICAL. */
typedef int (*eqcon_eval_fn)(const double* theta, int32_t k, double* out,
                             void* user_data);
typedef int (*eqcon_jacobian_fn)(const double* theta, int32_t k, double* out,
                                 void* user_data);

/* Affine constraint R^T (theta - alpha) = 0; R is k x d (row-major, full
 * column rank), alpha may be NULL for zero. */
EQCON_API eqcon_status eqcon_constraint_linear(const double* R, int32_t k,
                                               int32_t d, const double* alpha,
                                               eqcon_constraint** out);

/* Unit circle in R^2. */
EQCON_API eqcon_status eqcon_constraint_circle(eqcon_constraint** out);

/* All k coordinates equal (k >= 2). */
EQCON_API eqcon_status eqcon_constraint_equality(int32_t k,
                                                 eqcon_constraint** out);

/* Fixed coefficient of variation sigma = c * mu on theta = (mu, sigma);
 * form 0 is the linear writing c*theta1 - theta2, form 1 the ratio writing
 * theta2/theta1 - c. */
EQCON_API eqcon_status eqcon_constraint_cv(double c, int32_t form,
                                           eqcon_constraint** out);

/* General smooth constraint from callbacks; jac may be NULL, in which case
 * derivatives are formed by central differences. user_data is borrowed and
 * must outlive the handle. */
EQCON_API eqcon_status eqcon_constraint_custom(int32_t k, int32_t d,
                                               eqcon_eval_fn eval,
                                               eqcon_jacobian_fn jac,
                                               void* user_data,
                                               eqcon_constraint** out);

EQCON_API void eqcon_constraint_free(eqcon_constraint* c);

EQCON_API eqcon_status eqcon_constraint_dims(const eqcon_constraint* c,
                                             int32_t* k, int32_t* d);

/* S(theta) into out[d]. */
EQCON_API eqcon_status eqcon_constraint_eval(const eqcon_constraint* c,
                                             const double* theta, double* out);

/* Jacobian at theta into out[d*k] (row-major). Fails with
 * EQCON_ERR_NUMERICAL when the rank drops below d. */
EQCON_API eqcon_status eqcon_constraint_jacobian(const eqcon_constraint* c,
                                                 const double* theta,
                                                 double* out);

/* Orthonormal null space basis of a full-row-rank d x k matrix into
 * out[k*(k-d)] (row-major). */
EQCON_API eqcon_status eqcon_null_space_basis(const double* jac, int32_t d,
                                              int32_t k, double* out);

/* ------------------------------------------------------------------ */
/* Constrained estimation                                              */
/* ------------------------------------------------------------------ */

typedef struct eqcon_result eqcon_result;

/* One correction step from (theta_hat, info_hat):
 * theta_hat - I^-1 J^T (J I^-1 J^T)^-1 S(theta_hat), into out[k]. */
EQCON_API eqcon_status eqcon_one_step(const double* theta_hat,
                                      const double* info_hat, int32_t k,
                                      int64_t n, const eqcon_constraint* c,
                                      double* out);

/* Euclidean projection of point onto { S = 0 }. Writes the projected point,
 * the sup-norm constraint residual and the Newton iteration count. When the
 * iteration fails to reach tolerance the best iterate is written and the
 * call returns EQCON_ERR_NO_CONVERGENCE. converged may be NULL. */
EQCON_API eqcon_status eqcon_project(const eqcon_constraint* c,
                                     const double* point, double* theta_tilde,
                                     double* residual, int32_t* iterations,
                                     int32_t* converged);

/* Full pipeline: one-step correction, projection, and the submodel
 * covariance bound at the projected point. On EQCON_ERR_NO_CONVERGENCE a
 * result handle is still produced (holding the best iterate). */
EQCON_API eqcon_status eqcon_estimate(const double* theta_hat,
                                      const double* info_hat, int32_t k,
                                      int64_t n, const eqcon_constraint* c,
                                      eqcon_result** out);

EQCON_API void eqcon_result_free(eqcon_result* r);

EQCON_API eqcon_status eqcon_result_dim(const eqcon_result* r, int32_t* k);
EQCON_API eqcon_status eqcon_result_theta_star(const eqcon_result* r,
                                               double* out);
EQCON_API eqcon_status eqcon_result_theta_tilde(const eqcon_result* r,
                                                double* out);
/* Submodel covariance bound, k x k row-major. */
EQCON_API eqcon_status eqcon_result_bound(const eqcon_result* r, double* out);
EQCON_API eqcon_status eqcon_result_stats(const eqcon_result* r,
                                          double* residual,
                                          int32_t* iterations,
                                          int32_t* converged);

/* Covariance bound under the constraint, Schur complement form:
 * I^-1 - I^-1 J^T (J I^-1 J^T)^-1 J I^-1, into out[k*k]. jac is d x k
 * row-major. */
EQCON_API eqcon_status eqcon_constrained_bound(const double* info, int32_t k,
                                               const double* jac, int32_t d,
                                               double* out);

/* Same bound from a null space basis L (k x m row-major, m = k - d):
 * L (L^T I L)^-1 L^T. */
EQCON_API eqcon_status eqcon_constrained_bound_nullspace(const double* info,
                                                         int32_t k,
                                                         const double* L,
                                                         int32_t m,
                                                         double* out);

/* Projector M with M^2 = M and J M = 0 applied to influence rows:
 * out = influence * M^T, n x k row-major. */
EQCON_API eqcon_status eqcon_constrained_influence(const double* influence,
                                                   int64_t n, int32_t k,
                                                   const double* info,
                                                   const double* jac, int32_t d,
                                                   double* out);

/* Efficient score rows: out = influence * info, n x k row-major. */
EQCON_API eqcon_status eqcon_efficient_score(const double* influence,
                                             int64_t n, int32_t k,
                                             const double* info, double* out);

/* Closed form for affine constraints, into out[k]. alpha may be NULL. */
EQCON_API eqcon_status eqcon_linear_estimate(const double* theta_hat,
                                             const double* info_hat, int32_t k,
                                             int64_t n, const double* R,
                                             int32_t d, const double* alpha,
                                             double* out);

/* ------------------------------------------------------------------ */
/* Built-in models                                                     */
/* ------------------------------------------------------------------ */

/* Coordinate-wise means of an n x k sample (row-major) with the inverse
 * sample covariance as information: theta_hat[k], info_hat[k*k]. */
EQCON_API eqcon_status eqcon_fit_common_mean(const double* data, int64_t n,
                                             int32_t k, double* theta_hat,
                                             double* info_hat);

/* (mean, sd with the 1/n denominator) of a univariate sample plus the
 * information sigma^-2 diag(1, 2): theta_hat[2], info_hat[4]. */
EQCON_API eqcon_status eqcon_fit_location_scale(const double* data, int64_t n,
                                                double* theta_hat,
                                                double* info_hat);

/* Restricted location-scale estimate under sigma = c * mu for the normal
 * information pattern (1, 0, 2), into out[2]. */
EQCON_API eqcon_status eqcon_cv_estimate_normal(double mu_bar,
                                                double sigma_bar, double c,
                                                double* out);

/* Normal-scores rank correlation of two length-n columns. Ties are
 * EQCON_ERR_INVALID. */
EQCON_API eqcon_status eqcon_vdw_correlation(const double* x, const double* y,
                                             int64_t n, double* out);

/* Pairwise normal-scores correlations of an n x m sample with plug-in
 * information from the influence rows. theta_hat has length m(m-1)/2
 * (pairs in lexicographic order), info_hat is that size squared. */
EQCON_API eqcon_status eqcon_fit_exchangeable_copula(const double* data,
                                                     int64_t n, int32_t m,
                                                     double* theta_hat,
                                                     double* info_hat);

/* Influence rows of the copula fit: out is n x (m(m-1)/2) row-major. rho
 * holds the plugged-in pairwise correlations. */
EQCON_API eqcon_status eqcon_copula_influence(const double* data, int64_t n,
                                              int32_t m, const double* rho,
                                              double* out);

/* Equal-weight average of k pairwise estimates broadcast to all entries. */
EQCON_API eqcon_status eqcon_exchangeable_average(const double* theta,
                                                  int32_t k, double* out);

/* Covariance of the copula influence components under the given m x m
 * latent correlation matrix, into out[(m(m-1)/2)^2]. */
EQCON_API eqcon_status eqcon_copula_influence_covariance(const double* corr,
                                                         int32_t m,
                                                         double* out);

/* ------------------------------------------------------------------ */
/* Monte Carlo                                                         */
/* ------------------------------------------------------------------ */

typedef struct eqcon_scenario eqcon_scenario;
typedef struct eqcon_report eqcon_report;

EQCON_API eqcon_status eqcon_scenario_common_mean(const double* true_theta,
                                                  int32_t k, const double* cov,
                                                  int64_t n, int64_t reps,
                                                  uint64_t seed,
                                                  eqcon_scenario** out);

/* true_theta = (mu0, sigma0) must satisfy sigma0 = c * mu0; form as in
 * eqcon_constraint_cv. */
EQCON_API eqcon_status eqcon_scenario_location_scale_cv(
    const double* true_theta, double c, int32_t form, int64_t n, int64_t reps,
    uint64_t seed, eqcon_scenario** out);

EQCON_API eqcon_status eqcon_scenario_exchangeable_copula(
    int32_t m, double rho, int64_t n, int64_t reps, uint64_t seed,
    eqcon_scenario** out);

/* Multivariate normal mean with an arbitrary constraint. The constraint is
 * copied; the handle may be freed afterwards (custom callbacks must still
 * outlive the scenario). */
EQCON_API eqcon_status eqcon_scenario_custom_mvn(const double* true_theta,
                                                 int32_t k, const double* cov,
                                                 const eqcon_constraint* c,
                                                 int64_t n, int64_t reps,
                                                 uint64_t seed,
                                                 eqcon_scenario** out);

EQCON_API void eqcon_scenario_free(eqcon_scenario* s);

/* Runs all replications. threads <= 0 uses the hardware count; the report
 * is bitwise identical for every thread count. Fails with
 * EQCON_ERR_NUMERICAL when more than 1% of replications fail. */
EQCON_API eqcon_status eqcon_scenario_run(const eqcon_scenario* s,
                                          int32_t threads,
                                          eqcon_report** out);

EQCON_API void eqcon_report_free(eqcon_report* r);

EQCON_API eqcon_status eqcon_report_dim(const eqcon_report* r, int32_t* k);
EQCON_API eqcon_status eqcon_report_counts(const eqcon_report* r,
                                           int64_t* reps, int64_t* reps_used,
                                           int64_t* failures, int64_t* n,
                                           int32_t* non_inferential);
EQCON_API eqcon_status eqcon_report_stats(const eqcon_report* r,
                                          double* equivalence_stat,
                                          double* max_residual);
/* Each matrix is k x k row-major. */
EQCON_API eqcon_status eqcon_report_empirical_cov(const eqcon_report* r,
                                                  double* out);
EQCON_API eqcon_status eqcon_report_unconstrained_cov(const eqcon_report* r,
                                                      double* out);
EQCON_API eqcon_status eqcon_report_theoretical_bound(const eqcon_report* r,
                                                      double* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* EQCON_H */
