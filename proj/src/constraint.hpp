#pragma once

#include <Eigen/Dense>
#include <functional>

namespace eqcon {

using EvalFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// A smooth map S : R^k -> R^d with 1 <= d < k whose zero set is the
// restricted parameter manifold. The Jacobian is either supplied
// analytically or formed by central differences; either way jacobian()
// verifies full row rank at the evaluation point and fails loudly when the
// constraint degenerates.
class ConstraintSystem {
 public:
  ConstraintSystem(int dim_param, int dim_constraint, EvalFn eval,
                   JacobianFn jacobian = nullptr);

  int dim_param() const noexcept { return k_; }
  int dim_constraint() const noexcept { return d_; }
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jac_); }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& theta) const;

  // d x k matrix of partial derivatives at theta. Throws a numerical error
  // when the (numerical) rank drops below d.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& theta) const;

 private:
  int k_;
  int d_;
  EvalFn eval_;
  JacobianFn jac_;
};

// Rank of a dense matrix from its singular values: count of
// sigma_i > max(rows, cols) * sigma_max * eps.
int numerical_rank(const Eigen::MatrixXd& m);

// Orthonormal basis of the null space of a full-row-rank d x k matrix,
// returned as the trailing k - d right singular vectors (k x (k - d)).
Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& jac);

// Affine constraint S(theta) = R^T (theta - alpha) with R of size k x d and
// full column rank. Kept as an explicit structure because the restricted
// estimator has a closed form in this case.
struct LinearConstraint {
  Eigen::MatrixXd R;
  Eigen::VectorXd alpha;

  LinearConstraint(Eigen::MatrixXd R_in, Eigen::VectorXd alpha_in);

  int dim_param() const noexcept { return static_cast<int>(R.rows()); }
  int dim_constraint() const noexcept { return static_cast<int>(R.cols()); }

  ConstraintSystem to_system() const;
};

// Unit circle in R^2: S(theta) = theta_1^2 + theta_2^2 - 1. The standard
// smoke-test constraint for the nonlinear path.
ConstraintSystem circle_constraint();

// Equality of all k coordinates, expressed through the first k - 1 columns
// of the centering matrix I - (1/k) 1 1^T (they are linearly independent and
// each is orthogonal to the all-ones vector).
LinearConstraint equality_constraint(int k);

}  // namespace eqcon
