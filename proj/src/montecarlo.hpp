#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>

#include "constraint.hpp"
#include "models.hpp"

namespace eqcon {

enum class ScenarioModel {
  common_mean,
  location_scale_cv,
  exchangeable_copula,
  custom_mvn,
};

// A fully specified repeated-sampling experiment. The constraint member is
// always populated (built-in models carry their implied restriction) and the
// stated truth must satisfy it to 1e-12 in the sup norm.
struct Scenario {
  ScenarioModel model = ScenarioModel::common_mean;
  Eigen::VectorXd true_theta;
  Eigen::MatrixXd covariance;  // sampling covariance for the mean models
  std::shared_ptr<const ConstraintSystem> constraint;
  int copula_m = 0;  // number of copula coordinates, exchangeable model only
  std::int64_t n = 0;
  std::int64_t reps = 0;
  std::uint64_t seed = 0;
};

Scenario make_common_mean_scenario(Eigen::VectorXd true_theta,
                                   Eigen::MatrixXd covariance, std::int64_t n,
                                   std::int64_t reps, std::uint64_t seed);

// true_theta = (mu0, sigma0) with sigma0 = c * mu0; the form selects how the
// restriction is written, not where it holds.
Scenario make_location_scale_cv_scenario(Eigen::Vector2d true_theta, double c,
                                         CvForm form, std::int64_t n,
                                         std::int64_t reps, std::uint64_t seed);

// Exchangeable Gaussian copula on m >= 3 coordinates with common latent
// correlation rho in (-1/(m-1), 1).
Scenario make_exchangeable_copula_scenario(int m, double rho, std::int64_t n,
                                           std::int64_t reps,
                                           std::uint64_t seed);

Scenario make_custom_mvn_scenario(
    Eigen::VectorXd true_theta, Eigen::MatrixXd covariance,
    std::shared_ptr<const ConstraintSystem> constraint, std::int64_t n,
    std::int64_t reps, std::uint64_t seed);

struct MCReport {
  Eigen::MatrixXd empirical_cov;      // of sqrt(n)(theta~ - theta0)
  Eigen::MatrixXd unconstrained_cov;  // of sqrt(n)(theta^ - theta0)
  Eigen::MatrixXd theoretical_bound;  // submodel bound at the truth
  double equivalence_stat = 0.0;      // median of sqrt(n) |theta~ - theta*|
  double max_constraint_residual = 0.0;
  std::int64_t convergence_failures = 0;
  std::int64_t reps = 0;
  std::int64_t reps_used = 0;
  std::int64_t n = 0;
  bool non_inferential = false;  // too few replications for inference
};

// Engine for one replication's randomness: a counter-based reseed so that
// replication r is the same stream no matter which thread runs it or in
// which order.
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t rep);

// n rows from N(mean, cov), Cholesky factor times i.i.d. standard normals.
Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov, std::int64_t n,
                           std::mt19937_64& rng);

// n rows from the Gaussian copula with the given latent correlation matrix.
// Marginals default to uniform on (0,1); otherwise each column is passed
// through the corresponding quantile transform.
using MarginalQuantile = std::function<double(double)>;
Eigen::MatrixXd sample_gaussian_copula(
    const Eigen::MatrixXd& corr, const std::vector<MarginalQuantile>& marginals,
    std::int64_t n, std::mt19937_64& rng);

// Runs every replication (optionally across threads; results are identical
// for any thread count), refits the model, applies the constrained
// estimator and aggregates. Replications whose fit or projection fails are
// counted; more than 1% of them is an error.
MCReport run_scenario(const Scenario& sc, int threads = 1);

}  // namespace eqcon
