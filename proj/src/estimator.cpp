#include "estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace eqcon {

namespace {

void check_symmetric(const Eigen::MatrixXd& m, const char* label) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw_invalid(std::string(label) + " is not symmetric (max asymmetry " +
                  std::to_string(asym) + ")");
  }
}

Eigen::LLT<Eigen::MatrixXd> spd_factor(const Eigen::MatrixXd& m,
                                       const char* label) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw_numerical(std::string(label) + " is not positive definite");
  }
  return llt;
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

void check_jac_shape(const Eigen::MatrixXd& jac, Eigen::Index k,
                     const char* label) {
  const Eigen::Index d = jac.rows();
  if (jac.cols() != k || d < 1 || d >= k) {
    throw_invalid(std::string(label) + ": constraint dimension must be d x k " +
                  "with 1 <= d < k, got " + std::to_string(d) + "x" +
                  std::to_string(jac.cols()) + " against k=" +
                  std::to_string(k));
  }
  if (numerical_rank(jac) < d) {
    throw_numerical(std::string(label) +
                    ": constraint Jacobian is rank deficient");
  }
}

}  // namespace

EfficientEstimate::EfficientEstimate(Eigen::VectorXd theta,
                                     Eigen::MatrixXd info,
                                     std::int64_t sample_size)
    : theta_hat(std::move(theta)), info_hat(std::move(info)), n(sample_size) {
  const Eigen::Index k = theta_hat.size();
  if (k < 1) throw_invalid("estimate must have at least one coordinate");
  if (info_hat.rows() != k || info_hat.cols() != k) {
    throw_invalid("information matrix must be " + std::to_string(k) + "x" +
                  std::to_string(k));
  }
  if (n < 1) throw_invalid("sample size must be positive");
  if (!theta_hat.allFinite() || !info_hat.allFinite()) {
    throw_invalid("estimate contains non-finite entries");
  }
  check_symmetric(info_hat, "information matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info_hat,
                                                    Eigen::EigenvaluesOnly);
  if (es.eigenvalues()(0) <= 0.0) {
    throw_numerical("information matrix is not positive definite "
                    "(min eigenvalue " +
                    std::to_string(es.eigenvalues()(0)) + ")");
  }
}

Eigen::VectorXd one_step_update(const EfficientEstimate& est,
                                const ConstraintSystem& cs) {
  if (cs.dim_param() != est.dim()) {
    throw_invalid("constraint acts on " + std::to_string(cs.dim_param()) +
                  " parameters, estimate has " + std::to_string(est.dim()));
  }
  const Eigen::VectorXd s = cs.evaluate(est.theta_hat);
  const Eigen::MatrixXd jac = cs.jacobian(est.theta_hat);
  auto llt = spd_factor(est.info_hat, "information matrix");
  const Eigen::MatrixXd x = llt.solve(jac.transpose());  // k x d
  const Eigen::MatrixXd w = symmetrized(jac * x);        // d x d
  auto wllt = spd_factor(w, "constraint normal matrix J I^-1 J^T");
  return est.theta_hat - x * wllt.solve(s);
}

std::pair<Eigen::VectorXd, ProjectionDiagnostics> project_to_manifold(
    const Eigen::VectorXd& point, const ConstraintSystem& cs,
    const ProjectionOptions& opts) {
  const int k = cs.dim_param();
  const int d = cs.dim_constraint();
  if (point.size() != k) {
    throw_invalid("projection point has length " +
                  std::to_string(point.size()) + ", expected " +
                  std::to_string(k));
  }
  if (!point.allFinite()) throw_invalid("projection point is not finite");

  Eigen::VectorXd zeta = point;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd s = cs.evaluate(zeta);
  Eigen::MatrixXd jac = cs.jacobian(zeta);

  auto stationarity = [&point](const Eigen::VectorXd& z,
                               const Eigen::MatrixXd& j,
                               const Eigen::VectorXd& l) -> Eigen::VectorXd {
    return z - point + j.transpose() * l;
  };

  Eigen::VectorXd r1 = stationarity(zeta, jac, lambda);
  double s_inf = s.cwiseAbs().maxCoeff();
  double res = std::max(r1.cwiseAbs().maxCoeff(), s_inf);

  ProjectionDiagnostics diag;
  diag.constraint_residual = s_inf;
  diag.kkt_residual = res;
  if (res <= opts.tolerance) {
    diag.converged = true;
    return {zeta, diag};
  }

  Eigen::VectorXd best_zeta = zeta;
  double best_res = res, best_s_inf = s_inf;
  int best_iter = 0;

  const double diff_step = std::cbrt(std::numeric_limits<double>::epsilon());
  for (int it = 1; it <= opts.max_iterations; ++it) {
    // Hessian of the Lagrangian. The curvature of the constraints enters
    // through sum_i lambda_i Hess(S_i), assembled by central differences of
    // the Jacobian; with zero multipliers the block is the identity.
    Eigen::MatrixXd hess = Eigen::MatrixXd::Identity(k, k);
    if (lambda.cwiseAbs().maxCoeff() > 0.0) {
      Eigen::VectorXd zp = zeta, zm = zeta;
      for (int j = 0; j < k; ++j) {
        const double h = diff_step * std::max(1.0, std::abs(zeta(j)));
        zp(j) = zeta(j) + h;
        zm(j) = zeta(j) - h;
        hess.col(j) +=
            (cs.jacobian(zp) - cs.jacobian(zm)).transpose() * lambda /
            (zp(j) - zm(j));
        zp(j) = zeta(j);
        zm(j) = zeta(j);
      }
      hess = symmetrized(hess);
    }

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + d, k + d);
    kkt.topLeftCorner(k, k) = hess;
    kkt.topRightCorner(k, d) = jac.transpose();
    kkt.bottomLeftCorner(d, k) = jac;
    Eigen::VectorXd rhs(k + d);
    rhs.head(k) = -r1;
    rhs.tail(d) = -s;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(kkt);
    if (qr.rank() < k + d) {
      throw_numerical("projection KKT system is singular at iteration " +
                      std::to_string(it));
    }
    const Eigen::VectorXd delta = qr.solve(rhs);

    // Backtracking on the joint residual; trial points where the constraint
    // itself degenerates are treated as rejected steps.
    bool accepted = false;
    double t = 1.0;
    for (int half = 0; half <= opts.max_halvings; ++half, t *= 0.5) {
      const Eigen::VectorXd zn = zeta + t * delta.head(k);
      const Eigen::VectorXd ln = lambda + t * delta.tail(d);
      Eigen::VectorXd sn;
      Eigen::MatrixXd jn;
      try {
        sn = cs.evaluate(zn);
        jn = cs.jacobian(zn);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numerical) continue;
        throw;
      }
      const Eigen::VectorXd r1n = stationarity(zn, jn, ln);
      const double sn_inf = sn.cwiseAbs().maxCoeff();
      const double resn = std::max(r1n.cwiseAbs().maxCoeff(), sn_inf);
      if (resn < res) {
        zeta = zn;
        lambda = ln;
        s = sn;
        jac = jn;
        r1 = r1n;
        s_inf = sn_inf;
        res = resn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    if (res < best_res) {
      best_zeta = zeta;
      best_res = res;
      best_s_inf = s_inf;
      best_iter = it;
    }
    if (res <= opts.tolerance) {
      diag.iterations = it;
      diag.constraint_residual = s_inf;
      diag.kkt_residual = res;
      diag.converged = true;
      return {zeta, diag};
    }
  }

  diag.iterations = best_iter;
  diag.constraint_residual = best_s_inf;
  diag.kkt_residual = best_res;
  diag.converged = false;
  return {best_zeta, diag};
}

ConstrainedResult estimate_constrained(const EfficientEstimate& est,
                                       const ConstraintSystem& cs) {
  ConstrainedResult out;
  out.theta_star = one_step_update(est, cs);
  auto [tilde, diag] = project_to_manifold(out.theta_star, cs);
  out.theta_tilde = std::move(tilde);
  out.constraint_residual = diag.constraint_residual;
  out.iterations = diag.iterations;
  out.converged = diag.converged;
  out.bound_Q = constrained_bound(est.info_hat, cs.jacobian(out.theta_tilde));
  return out;
}

Eigen::MatrixXd constrained_bound(const Eigen::MatrixXd& info,
                                  const Eigen::MatrixXd& jac) {
  const Eigen::Index k = info.rows();
  if (info.cols() != k || k < 1) throw_invalid("information matrix must be square");
  check_symmetric(info, "information matrix");
  check_jac_shape(jac, k, "constrained bound");
  auto llt = spd_factor(info, "information matrix");
  const Eigen::MatrixXd iinv = llt.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd x = llt.solve(jac.transpose());
  const Eigen::MatrixXd w = symmetrized(jac * x);
  auto wllt = spd_factor(w, "constraint normal matrix J I^-1 J^T");
  return symmetrized(iinv - x * wllt.solve(x.transpose()));
}

Eigen::MatrixXd constrained_bound_nullspace(const Eigen::MatrixXd& info,
                                            const Eigen::MatrixXd& L) {
  const Eigen::Index k = info.rows();
  if (info.cols() != k || k < 1) throw_invalid("information matrix must be square");
  check_symmetric(info, "information matrix");
  const Eigen::Index m = L.cols();
  if (L.rows() != k || m < 1 || m >= k) {
    throw_invalid("null space basis must be k x (k - d) with 1 <= k - d < k");
  }
  if (numerical_rank(L) < m) {
    throw_numerical("null space basis does not have full column rank");
  }
  spd_factor(info, "information matrix");  // reject indefinite input early
  const Eigen::MatrixXd g = symmetrized(L.transpose() * info * L);
  auto gllt = spd_factor(g, "reduced information L^T I L");
  return symmetrized(L * gllt.solve(L.transpose()));
}

Eigen::MatrixXd influence_projector(const Eigen::MatrixXd& info,
                                    const Eigen::MatrixXd& jac) {
  const Eigen::Index k = info.rows();
  if (info.cols() != k || k < 1) throw_invalid("information matrix must be square");
  check_symmetric(info, "information matrix");
  check_jac_shape(jac, k, "influence projector");
  auto llt = spd_factor(info, "information matrix");
  const Eigen::MatrixXd x = llt.solve(jac.transpose());
  const Eigen::MatrixXd w = symmetrized(jac * x);
  auto wllt = spd_factor(w, "constraint normal matrix J I^-1 J^T");
  return Eigen::MatrixXd::Identity(k, k) - x * wllt.solve(jac);
}

InfluenceSample efficient_score(const Eigen::MatrixXd& info,
                                const InfluenceSample& sample) {
  if (sample.tag != ModelTag::P) {
    throw_invalid("efficient score expects influence rows from the "
                  "unrestricted model");
  }
  const Eigen::Index k = info.rows();
  if (info.cols() != k || sample.values.cols() != k) {
    throw_invalid("influence rows and information matrix dimensions differ");
  }
  check_symmetric(info, "information matrix");
  return InfluenceSample{sample.values * info, ModelTag::P};
}

InfluenceSample constrained_influence(const InfluenceSample& sample,
                                      const Eigen::MatrixXd& info,
                                      const Eigen::MatrixXd& jac) {
  if (sample.tag != ModelTag::P) {
    throw_invalid("constrained influence expects rows from the unrestricted "
                  "model");
  }
  if (sample.values.cols() != info.rows()) {
    throw_invalid("influence rows and information matrix dimensions differ");
  }
  const Eigen::MatrixXd m = influence_projector(info, jac);
  return InfluenceSample{sample.values * m.transpose(), ModelTag::Q};
}

Eigen::VectorXd linear_constrained_estimate(const EfficientEstimate& est,
                                            const LinearConstraint& lc) {
  if (lc.dim_param() != est.dim()) {
    throw_invalid("linear constraint acts on " +
                  std::to_string(lc.dim_param()) + " parameters, estimate has " +
                  std::to_string(est.dim()));
  }
  auto llt = spd_factor(est.info_hat, "information matrix");
  const Eigen::MatrixXd x = llt.solve(lc.R);                  // k x d
  const Eigen::MatrixXd w = symmetrized(lc.R.transpose() * x);  // d x d
  auto wllt = spd_factor(w, "reduced normal matrix R^T I^-1 R");
  const Eigen::VectorXd gap = lc.R.transpose() * (est.theta_hat - lc.alpha);
  return est.theta_hat - x * wllt.solve(gap);
}

}  // namespace eqcon
