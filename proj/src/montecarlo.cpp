#include "montecarlo.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "estimator.hpp"
#include "normal.hpp"

namespace eqcon {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void validate_scenario(const Scenario& sc) {
  const Eigen::Index k = sc.true_theta.size();
  if (k < 1) throw_invalid("scenario is missing true_theta");
  if (!sc.true_theta.allFinite()) throw_invalid("true_theta is not finite");
  if (sc.n < 2) throw_invalid("scenario needs n >= 2 observations");
  if (sc.reps < 1) throw_invalid("scenario needs at least 1 replication");
  if (!sc.constraint) throw_invalid("scenario is missing its constraint");
  if (sc.constraint->dim_param() != k) {
    throw_invalid("constraint acts on " +
                  std::to_string(sc.constraint->dim_param()) +
                  " parameters, true_theta has " + std::to_string(k));
  }
  const Eigen::VectorXd s = sc.constraint->evaluate(sc.true_theta);
  const double viol = s.cwiseAbs().maxCoeff();
  if (viol > 1e-12) {
    throw_invalid("true_theta violates the constraint (|S| = " +
                  std::to_string(viol) + " > 1e-12)");
  }
  switch (sc.model) {
    case ScenarioModel::common_mean:
    case ScenarioModel::custom_mvn:
      if (sc.covariance.rows() != k || sc.covariance.cols() != k) {
        throw_invalid("sampling covariance must be " + std::to_string(k) +
                      "x" + std::to_string(k));
      }
      break;
    case ScenarioModel::location_scale_cv:
      if (k != 2) throw_invalid("location-scale scenario needs theta in R^2");
      if (!(sc.true_theta(1) > 0.0)) {
        throw_invalid("location-scale scenario needs sigma0 > 0");
      }
      break;
    case ScenarioModel::exchangeable_copula:
      if (sc.copula_m < 3) {
        throw_invalid("copula scenario needs at least 3 coordinates");
      }
      if (k != static_cast<Eigen::Index>(sc.copula_m) * (sc.copula_m - 1) / 2) {
        throw_invalid("copula scenario has inconsistent pair count");
      }
      break;
  }
}

// Per-model data generation and refit. Returns the unconstrained estimate
// and the constraint system to project onto (the scenario's own).
EfficientEstimate fit_replication(const Scenario& sc,
                                  const Eigen::MatrixXd& data) {
  switch (sc.model) {
    case ScenarioModel::common_mean:
      return fit_common_mean(DataMatrix(data)).first;
    case ScenarioModel::custom_mvn:
      return fit_mvn_mean(DataMatrix(data));
    case ScenarioModel::location_scale_cv:
      return fit_location_scale_normal(DataMatrix(data)).first;
    case ScenarioModel::exchangeable_copula:
      return fit_exchangeable_copula(DataMatrix(data)).estimate;
  }
  throw_invalid("unknown scenario model");
}

Eigen::MatrixXd generate_data(const Scenario& sc, std::mt19937_64& rng) {
  switch (sc.model) {
    case ScenarioModel::common_mean:
    case ScenarioModel::custom_mvn:
      return sample_mvn(sc.true_theta, sc.covariance, sc.n, rng);
    case ScenarioModel::location_scale_cv: {
      Eigen::VectorXd mean(1);
      mean(0) = sc.true_theta(0);
      Eigen::MatrixXd cov(1, 1);
      cov(0, 0) = sc.true_theta(1) * sc.true_theta(1);
      return sample_mvn(mean, cov, sc.n, rng);
    }
    case ScenarioModel::exchangeable_copula: {
      const Eigen::MatrixXd corr =
          correlation_from_pairwise(sc.copula_m, sc.true_theta);
      return sample_gaussian_copula(corr, {}, sc.n, rng);
    }
  }
  throw_invalid("unknown scenario model");
}

// Information at the truth, for the theoretical bound.
Eigen::MatrixXd true_information(const Scenario& sc) {
  const Eigen::Index k = sc.true_theta.size();
  switch (sc.model) {
    case ScenarioModel::common_mean:
    case ScenarioModel::custom_mvn: {
      Eigen::LLT<Eigen::MatrixXd> llt(
          0.5 * (sc.covariance + sc.covariance.transpose()));
      if (llt.info() != Eigen::Success) {
        throw_numerical("sampling covariance is not positive definite");
      }
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
      return 0.5 * (inv + inv.transpose());
    }
    case ScenarioModel::location_scale_cv: {
      const double s2 = sc.true_theta(1) * sc.true_theta(1);
      Eigen::MatrixXd info(2, 2);
      info << 1.0 / s2, 0.0, 0.0, 2.0 / s2;
      return info;
    }
    case ScenarioModel::exchangeable_copula: {
      const Eigen::MatrixXd corr =
          correlation_from_pairwise(sc.copula_m, sc.true_theta);
      const Eigen::MatrixXd cov = copula_influence_covariance(corr);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success) {
        throw_numerical("influence covariance at the truth is not positive "
                        "definite");
      }
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
      return 0.5 * (inv + inv.transpose());
    }
  }
  throw_invalid("unknown scenario model");
}

}  // namespace

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep) {
  const std::uint64_t mixed =
      splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (rep + 1)));
  return std::mt19937_64(mixed);
}

Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov, std::int64_t n,
                           std::mt19937_64& rng) {
  const Eigen::Index k = mean.size();
  if (k < 1) throw_invalid("sampler needs a non-empty mean");
  if (cov.rows() != k || cov.cols() != k) {
    throw_invalid("sampler covariance must be " + std::to_string(k) + "x" +
                  std::to_string(k));
  }
  if (n < 1) throw_invalid("sampler needs n >= 1");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw_invalid("sampler covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw_numerical("sampler covariance is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd out(n, k);
  Eigen::VectorXd z(k);
  for (std::int64_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) z(j) = normal_draw(rng);
    out.row(i) = (mean + l * z).transpose();
  }
  return out;
}

Eigen::MatrixXd sample_gaussian_copula(
    const Eigen::MatrixXd& corr,
    const std::vector<MarginalQuantile>& marginals, std::int64_t n,
    std::mt19937_64& rng) {
  const Eigen::Index m = corr.rows();
  if (corr.cols() != m || m < 2) {
    throw_invalid("copula sampler needs a square correlation matrix with "
                  "at least 2 rows");
  }
  if (((corr.diagonal().array() - 1.0).abs() > 1e-12).any()) {
    throw_invalid("copula sampler needs a unit diagonal");
  }
  if (!marginals.empty() &&
      marginals.size() != static_cast<std::size_t>(m)) {
    throw_invalid("expected one marginal transform per column");
  }
  if (n < 1) throw_invalid("sampler needs n >= 1");
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) {
    throw_numerical("copula correlation matrix is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd out(n, m);
  Eigen::VectorXd z(m);
  for (std::int64_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) z(j) = normal_draw(rng);
    const Eigen::VectorXd w = l * z;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double u = normal_cdf(w(j));
      out(i, j) =
          marginals.empty() ? u : marginals[static_cast<std::size_t>(j)](u);
    }
  }
  return out;
}

Scenario make_common_mean_scenario(Eigen::VectorXd true_theta,
                                   Eigen::MatrixXd covariance, std::int64_t n,
                                   std::int64_t reps, std::uint64_t seed) {
  Scenario sc;
  sc.model = ScenarioModel::common_mean;
  sc.true_theta = std::move(true_theta);
  sc.covariance = std::move(covariance);
  sc.constraint = std::make_shared<ConstraintSystem>(
      equality_constraint(static_cast<int>(sc.true_theta.size())).to_system());
  sc.n = n;
  sc.reps = reps;
  sc.seed = seed;
  validate_scenario(sc);
  return sc;
}

Scenario make_location_scale_cv_scenario(Eigen::Vector2d true_theta, double c,
                                         CvForm form, std::int64_t n,
                                         std::int64_t reps,
                                         std::uint64_t seed) {
  Scenario sc;
  sc.model = ScenarioModel::location_scale_cv;
  sc.true_theta = true_theta;
  sc.constraint =
      std::make_shared<ConstraintSystem>(cv_constraint(c, form));
  sc.n = n;
  sc.reps = reps;
  sc.seed = seed;
  validate_scenario(sc);
  return sc;
}

Scenario make_exchangeable_copula_scenario(int m, double rho, std::int64_t n,
                                           std::int64_t reps,
                                           std::uint64_t seed) {
  if (m < 3) throw_invalid("copula scenario needs at least 3 coordinates");
  if (!(rho > -1.0 / (m - 1) && rho < 1.0)) {
    throw_invalid("exchangeable correlation must lie in (-1/(m-1), 1)");
  }
  Scenario sc;
  sc.model = ScenarioModel::exchangeable_copula;
  sc.copula_m = m;
  const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
  sc.true_theta = Eigen::VectorXd::Constant(k, rho);
  sc.constraint = std::make_shared<ConstraintSystem>(
      equality_constraint(static_cast<int>(k)).to_system());
  sc.n = n;
  sc.reps = reps;
  sc.seed = seed;
  validate_scenario(sc);
  return sc;
}

Scenario make_custom_mvn_scenario(
    Eigen::VectorXd true_theta, Eigen::MatrixXd covariance,
    std::shared_ptr<const ConstraintSystem> constraint, std::int64_t n,
    std::int64_t reps, std::uint64_t seed) {
  Scenario sc;
  sc.model = ScenarioModel::custom_mvn;
  sc.true_theta = std::move(true_theta);
  sc.covariance = std::move(covariance);
  sc.constraint = std::move(constraint);
  sc.n = n;
  sc.reps = reps;
  sc.seed = seed;
  validate_scenario(sc);
  return sc;
}

MCReport run_scenario(const Scenario& sc, int threads) {
  validate_scenario(sc);
  const Eigen::Index k = sc.true_theta.size();
  true_information(sc);  // reject degenerate sampling setups before running

  struct Rep {
    Eigen::VectorXd hat, star, tilde;
    double residual = 0.0;
    bool ok = false;
  };
  std::vector<Rep> results(static_cast<std::size_t>(sc.reps));

  auto run_one = [&sc](std::int64_t r, Rep& out) {
    std::mt19937_64 rng = replication_rng(sc.seed, static_cast<std::uint64_t>(r));
    try {
      const Eigen::MatrixXd data = generate_data(sc, rng);
      const EfficientEstimate est = fit_replication(sc, data);
      const ConstrainedResult res = estimate_constrained(est, *sc.constraint);
      if (!res.converged) return;  // leaves ok = false
      out.hat = est.theta_hat;
      out.star = res.theta_star;
      out.tilde = res.theta_tilde;
      out.residual = res.constraint_residual;
      out.ok = true;
    } catch (const Error&) {
      // counted below; anything else propagates
    }
  };

  int nthreads = threads;
  if (nthreads <= 0) {
    nthreads = static_cast<int>(std::thread::hardware_concurrency());
    if (nthreads < 1) nthreads = 1;
  }
  nthreads = static_cast<int>(
      std::min<std::int64_t>(nthreads, sc.reps));

  if (nthreads <= 1) {
    for (std::int64_t r = 0; r < sc.reps; ++r) {
      run_one(r, results[static_cast<std::size_t>(r)]);
    }
  } else {
    std::atomic<std::int64_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::int64_t r = next.fetch_add(1);
        if (r >= sc.reps) return;
        run_one(r, results[static_cast<std::size_t>(r)]);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Aggregation runs in replication order regardless of thread count, so the
  // report is identical for any parallelism.
  const double sqrt_n = std::sqrt(static_cast<double>(sc.n));
  Eigen::MatrixXd acc_tilde = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd acc_hat = Eigen::MatrixXd::Zero(k, k);
  std::vector<double> gaps;
  gaps.reserve(results.size());
  std::int64_t used = 0, failures = 0;
  double max_resid = 0.0;
  for (const Rep& rep : results) {
    if (!rep.ok) {
      ++failures;
      continue;
    }
    ++used;
    const Eigen::VectorXd yt = sqrt_n * (rep.tilde - sc.true_theta);
    const Eigen::VectorXd yh = sqrt_n * (rep.hat - sc.true_theta);
    acc_tilde += yt * yt.transpose();
    acc_hat += yh * yh.transpose();
    gaps.push_back(sqrt_n * (rep.tilde - rep.star).norm());
    max_resid = std::max(max_resid, rep.residual);
  }
  if (failures * 100 > sc.reps) {
    throw_numerical(std::to_string(failures) + " of " +
                    std::to_string(sc.reps) +
                    " replications failed to fit or converge (more than 1%)");
  }

  MCReport report;
  report.reps = sc.reps;
  report.reps_used = used;
  report.n = sc.n;
  report.convergence_failures = failures;
  report.non_inferential = sc.reps < 30;
  report.max_constraint_residual = max_resid;
  if (used > 1) {
    report.empirical_cov = acc_tilde / static_cast<double>(used - 1);
    report.unconstrained_cov = acc_hat / static_cast<double>(used - 1);
  } else {
    report.empirical_cov = Eigen::MatrixXd::Zero(k, k);
    report.unconstrained_cov = Eigen::MatrixXd::Zero(k, k);
  }
  std::sort(gaps.begin(), gaps.end());
  const std::size_t g = gaps.size();
  report.equivalence_stat =
      g == 0 ? 0.0
             : (g % 2 == 1 ? gaps[g / 2]
                           : 0.5 * (gaps[g / 2 - 1] + gaps[g / 2]));
  report.theoretical_bound = constrained_bound(
      true_information(sc), sc.constraint->jacobian(sc.true_theta));
  return report;
}

}  // namespace eqcon
