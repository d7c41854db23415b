#include "eqcon/eqcon.h"

#include <Eigen/Dense>
#include <exception>
#include <memory>
#include <string>
#include <utility>

#include "../constraint.hpp"
#include "../errors.hpp"
#include "../estimator.hpp"
#include "../models.hpp"
#include "../montecarlo.hpp"

struct eqcon_constraint {
  eqcon::ConstraintSystem sys;
};

struct eqcon_result {
  eqcon::ConstrainedResult res;
};

struct eqcon_scenario {
  eqcon::Scenario sc;
};

struct eqcon_report {
  eqcon::MCReport rep;
};

namespace {

thread_local std::string g_last_error;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd matrix_in(const double* p, Eigen::Index rows,
                          Eigen::Index cols) {
  return Eigen::Map<const RowMat>(p, rows, cols);
}

Eigen::VectorXd vector_in(const double* p, Eigen::Index n) {
  return Eigen::Map<const Eigen::VectorXd>(p, n);
}

void matrix_out(const Eigen::MatrixXd& m, double* out) {
  Eigen::Map<RowMat>(out, m.rows(), m.cols()) = m;
}

void vector_out(const Eigen::VectorXd& v, double* out) {
  Eigen::Map<Eigen::VectorXd>(out, v.size()) = v;
}

void require(bool cond, const char* msg) {
  if (!cond) eqcon::throw_invalid(msg);
}

template <typename F>
eqcon_status guarded(F&& body) {
  try {
    return body();
  } catch (const eqcon::Error& e) {
    g_last_error = e.what();
    return e.kind() == eqcon::ErrorKind::invalid_input ? EQCON_ERR_INVALID
                                                       : EQCON_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EQCON_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown internal failure";
    return EQCON_ERR_INTERNAL;
  }
}

eqcon::ConstraintSystem custom_system(int32_t k, int32_t d,
                                      eqcon_eval_fn eval,
                                      eqcon_jacobian_fn jac, void* user_data) {
  require(eval != nullptr, "constraint evaluation callback is NULL");
  eqcon::EvalFn efn = [k, d, eval, user_data](
                          const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    Eigen::VectorXd out(d);
    if (eval(theta.data(), k, out.data(), user_data) != 0) {
      eqcon::throw_numerical("constraint callback reported failure");
    }
    return out;
  };
  eqcon::JacobianFn jfn;
  if (jac) {
    jfn = [k, d, jac, user_data](
              const Eigen::VectorXd& theta) -> Eigen::MatrixXd {
      RowMat out(d, k);
      if (jac(theta.data(), k, out.data(), user_data) != 0) {
        eqcon::throw_numerical("constraint Jacobian callback reported failure");
      }
      return out;
    };
  }
  return eqcon::ConstraintSystem(k, d, std::move(efn), std::move(jfn));
}

eqcon::EfficientEstimate estimate_in(const double* theta_hat,
                                     const double* info_hat, int32_t k,
                                     int64_t n) {
  require(theta_hat != nullptr && info_hat != nullptr,
          "estimate buffers are NULL");
  require(k >= 1, "parameter dimension must be positive");
  return eqcon::EfficientEstimate(vector_in(theta_hat, k),
                                  matrix_in(info_hat, k, k), n);
}

}  // namespace

const char* eqcon_last_error(void) { return g_last_error.c_str(); }

const char* eqcon_version(void) { return "0.1.0"; }

/* ------------------------------------------------------------------ */

eqcon_status eqcon_constraint_linear(const double* R, int32_t k, int32_t d,
                                     const double* alpha,
                                     eqcon_constraint** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "output handle is NULL");
    require(R != nullptr, "constraint matrix R is NULL");
    require(k >= 1 && d >= 1, "constraint dimensions must be positive");
    Eigen::VectorXd a = alpha ? vector_in(alpha, k)
                              : Eigen::VectorXd::Zero(k).eval();
    eqcon::LinearConstraint lc(matrix_in(R, k, d), std::move(a));
    *out = new eqcon_constraint{lc.to_system()};
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_circle(eqcon_constraint** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "output handle is NULL");
    *out = new eqcon_constraint{eqcon::circle_constraint()};
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_equality(int32_t k, eqcon_constraint** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "output handle is NULL");
    *out = new eqcon_constraint{eqcon::equality_constraint(k).to_system()};
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_cv(double c, int32_t form,
                                 eqcon_constraint** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "output handle is NULL");
    require(form == 0 || form == 1, "cv form must be 0 (linear) or 1 (ratio)");
    *out = new eqcon_constraint{eqcon::cv_constraint(
        c, form == 0 ? eqcon::CvForm::linear : eqcon::CvForm::ratio)};
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_custom(int32_t k, int32_t d, eqcon_eval_fn eval,
                                     eqcon_jacobian_fn jac, void* user_data,
                                     eqcon_constraint** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "output handle is NULL");
    *out = new eqcon_constraint{custom_system(k, d, eval, jac, user_data)};
    return EQCON_OK;
  });
}

void eqcon_constraint_free(eqcon_constraint* c) { delete c; }

eqcon_status eqcon_constraint_dims(const eqcon_constraint* c, int32_t* k,
                                   int32_t* d) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr, "constraint handle is NULL");
    if (k) *k = c->sys.dim_param();
    if (d) *d = c->sys.dim_constraint();
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_eval(const eqcon_constraint* c,
                                   const double* theta, double* out) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr && theta != nullptr && out != nullptr,
            "constraint evaluation received a NULL pointer");
    vector_out(c->sys.evaluate(vector_in(theta, c->sys.dim_param())), out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_constraint_jacobian(const eqcon_constraint* c,
                                       const double* theta, double* out) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr && theta != nullptr && out != nullptr,
            "constraint Jacobian received a NULL pointer");
    matrix_out(c->sys.jacobian(vector_in(theta, c->sys.dim_param())), out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_null_space_basis(const double* jac, int32_t d, int32_t k,
                                    double* out) {
  return guarded([&]() -> eqcon_status {
    require(jac != nullptr && out != nullptr,
            "null space basis received a NULL pointer");
    matrix_out(eqcon::null_space_basis(matrix_in(jac, d, k)), out);
    return EQCON_OK;
  });
}

/* ------------------------------------------------------------------ */

eqcon_status eqcon_one_step(const double* theta_hat, const double* info_hat,
                            int32_t k, int64_t n, const eqcon_constraint* c,
                            double* out) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr && out != nullptr, "one-step received a NULL pointer");
    vector_out(eqcon::one_step_update(estimate_in(theta_hat, info_hat, k, n),
                                      c->sys),
               out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_project(const eqcon_constraint* c, const double* point,
                           double* theta_tilde, double* residual,
                           int32_t* iterations, int32_t* converged) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr && point != nullptr && theta_tilde != nullptr,
            "projection received a NULL pointer");
    auto [tilde, diag] = eqcon::project_to_manifold(
        vector_in(point, c->sys.dim_param()), c->sys);
    vector_out(tilde, theta_tilde);
    if (residual) *residual = diag.constraint_residual;
    if (iterations) *iterations = diag.iterations;
    if (converged) *converged = diag.converged ? 1 : 0;
    if (!diag.converged) {
      g_last_error = "projection stopped before reaching tolerance "
                     "(best iterate returned)";
      return EQCON_ERR_NO_CONVERGENCE;
    }
    return EQCON_OK;
  });
}

eqcon_status eqcon_estimate(const double* theta_hat, const double* info_hat,
                            int32_t k, int64_t n, const eqcon_constraint* c,
                            eqcon_result** out) {
  return guarded([&]() -> eqcon_status {
    require(c != nullptr && out != nullptr, "estimate received a NULL pointer");
    eqcon::ConstrainedResult res = eqcon::estimate_constrained(
        estimate_in(theta_hat, info_hat, k, n), c->sys);
    const bool converged = res.converged;
    *out = new eqcon_result{std::move(res)};
    if (!converged) {
      g_last_error = "projection stopped before reaching tolerance "
                     "(best iterate returned)";
      return EQCON_ERR_NO_CONVERGENCE;
    }
    return EQCON_OK;
  });
}

void eqcon_result_free(eqcon_result* r) { delete r; }

eqcon_status eqcon_result_dim(const eqcon_result* r, int32_t* k) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && k != nullptr, "result accessor received NULL");
    *k = static_cast<int32_t>(r->res.theta_tilde.size());
    return EQCON_OK;
  });
}

eqcon_status eqcon_result_theta_star(const eqcon_result* r, double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "result accessor received NULL");
    vector_out(r->res.theta_star, out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_result_theta_tilde(const eqcon_result* r, double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "result accessor received NULL");
    vector_out(r->res.theta_tilde, out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_result_bound(const eqcon_result* r, double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "result accessor received NULL");
    matrix_out(r->res.bound_Q, out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_result_stats(const eqcon_result* r, double* residual,
                                int32_t* iterations, int32_t* converged) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr, "result accessor received NULL");
    if (residual) *residual = r->res.constraint_residual;
    if (iterations) *iterations = r->res.iterations;
    if (converged) *converged = r->res.converged ? 1 : 0;
    return EQCON_OK;
  });
}

eqcon_status eqcon_constrained_bound(const double* info, int32_t k,
                                     const double* jac, int32_t d,
                                     double* out) {
  return guarded([&]() -> eqcon_status {
    require(info != nullptr && jac != nullptr && out != nullptr,
            "bound received a NULL pointer");
    matrix_out(
        eqcon::constrained_bound(matrix_in(info, k, k), matrix_in(jac, d, k)),
        out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_constrained_bound_nullspace(const double* info, int32_t k,
                                               const double* L, int32_t m,
                                               double* out) {
  return guarded([&]() -> eqcon_status {
    require(info != nullptr && L != nullptr && out != nullptr,
            "bound received a NULL pointer");
    matrix_out(eqcon::constrained_bound_nullspace(matrix_in(info, k, k),
                                                  matrix_in(L, k, m)),
               out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_constrained_influence(const double* influence, int64_t n,
                                         int32_t k, const double* info,
                                         const double* jac, int32_t d,
                                         double* out) {
  return guarded([&]() -> eqcon_status {
    require(influence != nullptr && info != nullptr && jac != nullptr &&
                out != nullptr,
            "influence transform received a NULL pointer");
    require(n >= 1, "influence sample is empty");
    eqcon::InfluenceSample sample{matrix_in(influence, n, k),
                                  eqcon::ModelTag::P};
    matrix_out(eqcon::constrained_influence(sample, matrix_in(info, k, k),
                                            matrix_in(jac, d, k))
                   .values,
               out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_efficient_score(const double* influence, int64_t n,
                                   int32_t k, const double* info,
                                   double* out) {
  return guarded([&]() -> eqcon_status {
    require(influence != nullptr && info != nullptr && out != nullptr,
            "efficient score received a NULL pointer");
    require(n >= 1, "influence sample is empty");
    eqcon::InfluenceSample sample{matrix_in(influence, n, k),
                                  eqcon::ModelTag::P};
    matrix_out(eqcon::efficient_score(matrix_in(info, k, k), sample).values,
               out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_linear_estimate(const double* theta_hat,
                                   const double* info_hat, int32_t k,
                                   int64_t n, const double* R, int32_t d,
                                   const double* alpha, double* out) {
  return guarded([&]() -> eqcon_status {
    require(R != nullptr && out != nullptr,
            "linear estimate received a NULL pointer");
    Eigen::VectorXd a =
        alpha ? vector_in(alpha, k) : Eigen::VectorXd::Zero(k).eval();
    eqcon::LinearConstraint lc(matrix_in(R, k, d), std::move(a));
    vector_out(eqcon::linear_constrained_estimate(
                   estimate_in(theta_hat, info_hat, k, n), lc),
               out);
    return EQCON_OK;
  });
}

/* ------------------------------------------------------------------ */

eqcon_status eqcon_fit_common_mean(const double* data, int64_t n, int32_t k,
                                   double* theta_hat, double* info_hat) {
  return guarded([&]() -> eqcon_status {
    require(data != nullptr && theta_hat != nullptr && info_hat != nullptr,
            "fit received a NULL pointer");
    auto [est, lc] = eqcon::fit_common_mean(
        eqcon::DataMatrix(matrix_in(data, n, k)));
    (void)lc;
    vector_out(est.theta_hat, theta_hat);
    matrix_out(est.info_hat, info_hat);
    return EQCON_OK;
  });
}

eqcon_status eqcon_fit_location_scale(const double* data, int64_t n,
                                      double* theta_hat, double* info_hat) {
  return guarded([&]() -> eqcon_status {
    require(data != nullptr && theta_hat != nullptr && info_hat != nullptr,
            "fit received a NULL pointer");
    auto [est, pattern] = eqcon::fit_location_scale_normal(
        eqcon::DataMatrix(matrix_in(data, n, 1)));
    (void)pattern;
    vector_out(est.theta_hat, theta_hat);
    matrix_out(est.info_hat, info_hat);
    return EQCON_OK;
  });
}

eqcon_status eqcon_cv_estimate_normal(double mu_bar, double sigma_bar,
                                      double c, double* out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "cv estimate received a NULL pointer");
    const Eigen::Vector2d r = eqcon::cv_one_step_normal(mu_bar, sigma_bar, c);
    out[0] = r(0);
    out[1] = r(1);
    return EQCON_OK;
  });
}

eqcon_status eqcon_vdw_correlation(const double* x, const double* y, int64_t n,
                                   double* out) {
  return guarded([&]() -> eqcon_status {
    require(x != nullptr && y != nullptr && out != nullptr,
            "rank correlation received a NULL pointer");
    *out = eqcon::vdw_rank_correlation(vector_in(x, n), vector_in(y, n));
    return EQCON_OK;
  });
}

eqcon_status eqcon_fit_exchangeable_copula(const double* data, int64_t n,
                                           int32_t m, double* theta_hat,
                                           double* info_hat) {
  return guarded([&]() -> eqcon_status {
    require(data != nullptr && theta_hat != nullptr && info_hat != nullptr,
            "fit received a NULL pointer");
    eqcon::CopulaFit fit = eqcon::fit_exchangeable_copula(
        eqcon::DataMatrix(matrix_in(data, n, m)));
    vector_out(fit.estimate.theta_hat, theta_hat);
    matrix_out(fit.estimate.info_hat, info_hat);
    return EQCON_OK;
  });
}

eqcon_status eqcon_copula_influence(const double* data, int64_t n, int32_t m,
                                    const double* rho, double* out) {
  return guarded([&]() -> eqcon_status {
    require(data != nullptr && rho != nullptr && out != nullptr,
            "copula influence received a NULL pointer");
    require(m >= 2, "copula influence needs at least 2 columns");
    const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
    matrix_out(eqcon::copula_influence(eqcon::DataMatrix(matrix_in(data, n, m)),
                                       vector_in(rho, k))
                   .values,
               out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_exchangeable_average(const double* theta, int32_t k,
                                        double* out) {
  return guarded([&]() -> eqcon_status {
    require(theta != nullptr && out != nullptr,
            "average received a NULL pointer");
    require(k >= 1, "average needs at least one entry");
    vector_out(eqcon::exchangeable_average(vector_in(theta, k)), out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_copula_influence_covariance(const double* corr, int32_t m,
                                               double* out) {
  return guarded([&]() -> eqcon_status {
    require(corr != nullptr && out != nullptr,
            "influence covariance received a NULL pointer");
    require(m >= 2, "influence covariance needs at least 2 variables");
    matrix_out(eqcon::copula_influence_covariance(matrix_in(corr, m, m)), out);
    return EQCON_OK;
  });
}

/* ------------------------------------------------------------------ */

eqcon_status eqcon_scenario_common_mean(const double* true_theta, int32_t k,
                                        const double* cov, int64_t n,
                                        int64_t reps, uint64_t seed,
                                        eqcon_scenario** out) {
  return guarded([&]() -> eqcon_status {
    require(true_theta != nullptr && cov != nullptr && out != nullptr,
            "scenario received a NULL pointer");
    require(k >= 2, "common mean scenario needs k >= 2");
    *out = new eqcon_scenario{eqcon::make_common_mean_scenario(
        vector_in(true_theta, k), matrix_in(cov, k, k), n, reps, seed)};
    return EQCON_OK;
  });
}

eqcon_status eqcon_scenario_location_scale_cv(const double* true_theta,
                                              double c, int32_t form,
                                              int64_t n, int64_t reps,
                                              uint64_t seed,
                                              eqcon_scenario** out) {
  return guarded([&]() -> eqcon_status {
    require(true_theta != nullptr && out != nullptr,
            "scenario received a NULL pointer");
    require(form == 0 || form == 1, "cv form must be 0 (linear) or 1 (ratio)");
    *out = new eqcon_scenario{eqcon::make_location_scale_cv_scenario(
        Eigen::Vector2d(true_theta[0], true_theta[1]), c,
        form == 0 ? eqcon::CvForm::linear : eqcon::CvForm::ratio, n, reps,
        seed)};
    return EQCON_OK;
  });
}

eqcon_status eqcon_scenario_exchangeable_copula(int32_t m, double rho,
                                                int64_t n, int64_t reps,
                                                uint64_t seed,
                                                eqcon_scenario** out) {
  return guarded([&]() -> eqcon_status {
    require(out != nullptr, "scenario received a NULL pointer");
    *out = new eqcon_scenario{
        eqcon::make_exchangeable_copula_scenario(m, rho, n, reps, seed)};
    return EQCON_OK;
  });
}

eqcon_status eqcon_scenario_custom_mvn(const double* true_theta, int32_t k,
                                       const double* cov,
                                       const eqcon_constraint* c, int64_t n,
                                       int64_t reps, uint64_t seed,
                                       eqcon_scenario** out) {
  return guarded([&]() -> eqcon_status {
    require(true_theta != nullptr && cov != nullptr && c != nullptr &&
                out != nullptr,
            "scenario received a NULL pointer");
    require(k >= 2, "custom scenario needs k >= 2");
    *out = new eqcon_scenario{eqcon::make_custom_mvn_scenario(
        vector_in(true_theta, k), matrix_in(cov, k, k),
        std::make_shared<eqcon::ConstraintSystem>(c->sys), n, reps, seed)};
    return EQCON_OK;
  });
}

void eqcon_scenario_free(eqcon_scenario* s) { delete s; }

eqcon_status eqcon_scenario_run(const eqcon_scenario* s, int32_t threads,
                                eqcon_report** out) {
  return guarded([&]() -> eqcon_status {
    require(s != nullptr && out != nullptr, "run received a NULL pointer");
    *out = new eqcon_report{eqcon::run_scenario(s->sc, threads)};
    return EQCON_OK;
  });
}

void eqcon_report_free(eqcon_report* r) { delete r; }

eqcon_status eqcon_report_dim(const eqcon_report* r, int32_t* k) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && k != nullptr, "report accessor received NULL");
    *k = static_cast<int32_t>(r->rep.empirical_cov.rows());
    return EQCON_OK;
  });
}

eqcon_status eqcon_report_counts(const eqcon_report* r, int64_t* reps,
                                 int64_t* reps_used, int64_t* failures,
                                 int64_t* n, int32_t* non_inferential) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr, "report accessor received NULL");
    if (reps) *reps = r->rep.reps;
    if (reps_used) *reps_used = r->rep.reps_used;
    if (failures) *failures = r->rep.convergence_failures;
    if (n) *n = r->rep.n;
    if (non_inferential) *non_inferential = r->rep.non_inferential ? 1 : 0;
    return EQCON_OK;
  });
}

eqcon_status eqcon_report_stats(const eqcon_report* r,
                                double* equivalence_stat,
                                double* max_residual) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr, "report accessor received NULL");
    if (equivalence_stat) *equivalence_stat = r->rep.equivalence_stat;
    if (max_residual) *max_residual = r->rep.max_constraint_residual;
    return EQCON_OK;
  });
}

eqcon_status eqcon_report_empirical_cov(const eqcon_report* r, double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "report accessor received NULL");
    matrix_out(r->rep.empirical_cov, out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_report_unconstrained_cov(const eqcon_report* r,
                                            double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "report accessor received NULL");
    matrix_out(r->rep.unconstrained_cov, out);
    return EQCON_OK;
  });
}

eqcon_status eqcon_report_theoretical_bound(const eqcon_report* r,
                                            double* out) {
  return guarded([&]() -> eqcon_status {
    require(r != nullptr && out != nullptr, "report accessor received NULL");
    matrix_out(r->rep.theoretical_bound, out);
    return EQCON_OK;
  });
}
