#include "constraint.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <sstream>

#include "errors.hpp"

namespace eqcon {

namespace {

std::string format_point(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v(i);
  }
  os << "]";
  return os.str();
}

int rank_from_singular_values(const Eigen::VectorXd& sv, Eigen::Index rows,
                              Eigen::Index cols) {
  if (sv.size() == 0) return 0;
  const double tol = static_cast<double>(std::max(rows, cols)) * sv(0) *
                     std::numeric_limits<double>::epsilon();
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++r;
  }
  return r;
}

}  // namespace

ConstraintSystem::ConstraintSystem(int dim_param, int dim_constraint,
                                   EvalFn eval, JacobianFn jacobian)
    : k_(dim_param), d_(dim_constraint), eval_(std::move(eval)),
      jac_(std::move(jacobian)) {
  if (k_ < 2) throw_invalid("constraint dimension: need k >= 2 parameters");
  if (d_ < 1 || d_ >= k_) {
    throw_invalid("constraint dimension: need 1 <= d < k, got d=" +
                  std::to_string(d_) + ", k=" + std::to_string(k_));
  }
  if (!eval_) throw_invalid("constraint evaluation function must be set");
}

Eigen::VectorXd ConstraintSystem::evaluate(const Eigen::VectorXd& theta) const {
  if (theta.size() != k_) {
    throw_invalid("constraint evaluated at a point of length " +
                  std::to_string(theta.size()) + ", expected " +
                  std::to_string(k_));
  }
  Eigen::VectorXd s = eval_(theta);
  if (s.size() != d_) {
    throw_invalid("constraint returned a vector of length " +
                  std::to_string(s.size()) + ", expected " +
                  std::to_string(d_));
  }
  return s;
}

Eigen::MatrixXd ConstraintSystem::jacobian(const Eigen::VectorXd& theta) const {
  if (theta.size() != k_) {
    throw_invalid("constraint Jacobian requested at a point of length " +
                  std::to_string(theta.size()) + ", expected " +
                  std::to_string(k_));
  }
  Eigen::MatrixXd jac(d_, k_);
  if (jac_) {
    jac = jac_(theta);
    if (jac.rows() != d_ || jac.cols() != k_) {
      throw_invalid("constraint Jacobian has shape " +
                    std::to_string(jac.rows()) + "x" +
                    std::to_string(jac.cols()) + ", expected " +
                    std::to_string(d_) + "x" + std::to_string(k_));
    }
  } else {
    // Central differences with the classic cbrt(eps) step, scaled per
    // coordinate; the realised step tp - tm is used in the divisor.
    const double step = std::cbrt(std::numeric_limits<double>::epsilon());
    Eigen::VectorXd tp = theta, tm = theta;
    for (int j = 0; j < k_; ++j) {
      const double h = step * std::max(1.0, std::abs(theta(j)));
      tp(j) = theta(j) + h;
      tm(j) = theta(j) - h;
      jac.col(j) = (evaluate(tp) - evaluate(tm)) / (tp(j) - tm(j));
      tp(j) = theta(j);
      tm(j) = theta(j);
    }
  }
  if (!jac.allFinite()) {
    throw_numerical("constraint Jacobian is not finite at theta=" +
                    format_point(theta));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const int rank =
      rank_from_singular_values(svd.singularValues(), jac.rows(), jac.cols());
  if (rank < d_) {
    throw_numerical("constraint Jacobian is rank deficient (rank " +
                    std::to_string(rank) + " < " + std::to_string(d_) +
                    ") at theta=" + format_point(theta));
  }
  return jac;
}

int numerical_rank(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return rank_from_singular_values(svd.singularValues(), m.rows(), m.cols());
}

Eigen::MatrixXd null_space_basis(const Eigen::MatrixXd& jac) {
  const Eigen::Index d = jac.rows(), k = jac.cols();
  if (d < 1 || d >= k) {
    throw_invalid("null space basis: matrix must be d x k with 1 <= d < k");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeFullV);
  const int rank = rank_from_singular_values(svd.singularValues(), d, k);
  if (rank < d) {
    throw_numerical("null space basis: matrix is rank deficient (rank " +
                    std::to_string(rank) + " < " + std::to_string(d) + ")");
  }
  return svd.matrixV().rightCols(k - d);
}

LinearConstraint::LinearConstraint(Eigen::MatrixXd R_in,
                                   Eigen::VectorXd alpha_in)
    : R(std::move(R_in)), alpha(std::move(alpha_in)) {
  const Eigen::Index k = R.rows(), d = R.cols();
  if (d < 1 || d >= k) {
    throw_invalid("constraint dimension: R must be k x d with 1 <= d < k, got " +
                  std::to_string(k) + "x" + std::to_string(d));
  }
  if (alpha.size() != k) {
    throw_invalid("linear constraint offset has length " +
                  std::to_string(alpha.size()) + ", expected " +
                  std::to_string(k));
  }
  if (!R.allFinite() || !alpha.allFinite()) {
    throw_invalid("linear constraint contains non-finite entries");
  }
  if (numerical_rank(R) < d) {
    throw_invalid("linear constraint matrix R does not have full column rank");
  }
}

ConstraintSystem LinearConstraint::to_system() const {
  Eigen::MatrixXd Rt = R.transpose();
  Eigen::VectorXd a = alpha;
  return ConstraintSystem(
      dim_param(), dim_constraint(),
      [Rt, a](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
        return Rt * (theta - a);
      },
      [Rt](const Eigen::VectorXd&) -> Eigen::MatrixXd { return Rt; });
}

ConstraintSystem circle_constraint() {
  return ConstraintSystem(
      2, 1,
      [](const Eigen::VectorXd& t) -> Eigen::VectorXd {
        Eigen::VectorXd s(1);
        s(0) = t(0) * t(0) + t(1) * t(1) - 1.0;
        return s;
      },
      [](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
        Eigen::MatrixXd j(1, 2);
        j(0, 0) = 2.0 * t(0);
        j(0, 1) = 2.0 * t(1);
        return j;
      });
}

LinearConstraint equality_constraint(int k) {
  if (k < 2) throw_invalid("equality constraint needs at least 2 coordinates");
  Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(k, k) -
      Eigen::MatrixXd::Constant(k, k, 1.0 / static_cast<double>(k));
  return LinearConstraint(centering.leftCols(k - 1), Eigen::VectorXd::Zero(k));
}

}  // namespace eqcon
