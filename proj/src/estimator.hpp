#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

#include "constraint.hpp"

namespace eqcon {

// Root-n consistent estimate together with a positive definite estimate of
// the information matrix (inverse asymptotic covariance) under the
// unrestricted model.
struct EfficientEstimate {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd info_hat;
  std::int64_t n = 0;

  EfficientEstimate(Eigen::VectorXd theta, Eigen::MatrixXd info,
                    std::int64_t sample_size);

  int dim() const noexcept { return static_cast<int>(theta_hat.size()); }
};

// Whether a set of influence rows belongs to the unrestricted model (P) or
// to the submodel after projection (Q).
enum class ModelTag { P, Q };

struct InfluenceSample {
  Eigen::MatrixXd values;  // n x k, one row per observation
  ModelTag tag = ModelTag::P;
};

struct ProjectionOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  double tolerance = 1e-10;  // on both the constraint and the KKT residual
};

struct ProjectionDiagnostics {
  int iterations = 0;
  double constraint_residual = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
};

struct ConstrainedResult {
  Eigen::VectorXd theta_star;   // one-step corrected estimate
  Eigen::VectorXd theta_tilde;  // nearest point on the constraint set
  Eigen::MatrixXd bound_Q;      // asymptotic covariance bound under the submodel
  double constraint_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// One Newton-type correction toward the constraint set:
//   theta* = theta_hat - I^-1 J^T (J I^-1 J^T)^-1 S(theta_hat),
// all applications of I^-1 done through Cholesky solves.
Eigen::VectorXd one_step_update(const EfficientEstimate& est,
                                const ConstraintSystem& cs);

// Euclidean projection onto { S = 0 } by a full Newton iteration on the KKT
// system, started at the point itself with zero multipliers and globalised
// by residual-decreasing step halving. Non-convergence is reported through
// the diagnostics, not thrown; the best iterate seen is returned.
std::pair<Eigen::VectorXd, ProjectionDiagnostics> project_to_manifold(
    const Eigen::VectorXd& point, const ConstraintSystem& cs,
    const ProjectionOptions& opts = {});

// one_step_update followed by project_to_manifold, with the submodel bound
// evaluated at the projected point.
ConstrainedResult estimate_constrained(const EfficientEstimate& est,
                                       const ConstraintSystem& cs);

// Asymptotic covariance bound under the restriction, Schur form:
//   I^-1 - I^-1 J^T (J I^-1 J^T)^-1 J I^-1.
Eigen::MatrixXd constrained_bound(const Eigen::MatrixXd& info,
                                  const Eigen::MatrixXd& jac);

// Same bound through a null space parametrisation: L (L^T I L)^-1 L^T for
// any L whose columns span ker(J). Invariant under the choice of basis.
Eigen::MatrixXd constrained_bound_nullspace(const Eigen::MatrixXd& info,
                                            const Eigen::MatrixXd& L);

// Oblique projector M = I_k - I^-1 J^T (J I^-1 J^T)^-1 J mapping influence
// functions of the full model onto the submodel tangent space. Idempotent,
// and J M = 0.
Eigen::MatrixXd influence_projector(const Eigen::MatrixXd& info,
                                    const Eigen::MatrixXd& jac);

// Efficient score rows: influence rows right-multiplied by the information
// matrix. Requires rows from the unrestricted model.
InfluenceSample efficient_score(const Eigen::MatrixXd& info,
                                const InfluenceSample& sample);

// Applies the influence projector row-wise; the result is tagged as
// submodel (Q) influence.
InfluenceSample constrained_influence(const InfluenceSample& sample,
                                      const Eigen::MatrixXd& info,
                                      const Eigen::MatrixXd& jac);

// Closed form for affine restrictions R^T (theta - alpha) = 0:
//   theta~ = theta_hat - I^-1 R (R^T I^-1 R)^-1 R^T (theta_hat - alpha).
Eigen::VectorXd linear_constrained_estimate(const EfficientEstimate& est,
                                            const LinearConstraint& lc);

}  // namespace eqcon
