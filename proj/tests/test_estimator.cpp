#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "../src/constraint.hpp"
#include "../src/errors.hpp"
#include "../src/estimator.hpp"
#include "test_support.hpp"

using namespace eqcon;
using eqcon_test::capture;
using eqcon_test::contains;
using eqcon_test::max_abs_diff;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

LinearConstraint difference_constraint() {
  Eigen::MatrixXd R(2, 1);
  R << 1.0, -1.0;
  return LinearConstraint(R, Eigen::VectorXd::Zero(2));
}

// theta* for the unit-circle correction at identity information, written out
// by hand from S and its gradient so the library result has an independent
// cross-check.
Eigen::VectorXd circle_one_step_oracle(double x, double y) {
  const double s = x * x + y * y - 1.0;
  const double jx = 2.0 * x, jy = 2.0 * y;
  const double w = jx * jx + jy * jy;
  return vec2(x - jx * s / w, y - jy * s / w);
}

Eigen::VectorXd unit_circle_nearest(const Eigen::VectorXd& p) {
  return p / p.norm();
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace

TEST_CASE("efficient estimate validates its invariants") {
  const Eigen::VectorXd t = vec2(1.0, 2.0);
  CHECK_NOTHROW(EfficientEstimate(t, Eigen::MatrixXd::Identity(2, 2), 10));

  {
    const auto c = capture([&] {
      EfficientEstimate(t, mat2(1.0, 0.5, 0.2, 1.0), 10);  // asymmetric
    });
    REQUIRE(c.threw);
    CHECK(c.kind == ErrorKind::invalid_input);
    CHECK(contains(c.message, "not symmetric"));
  }
  {
    const auto c = capture([&] {
      EfficientEstimate(t, mat2(1.0, 2.0, 2.0, 1.0), 10);  // indefinite
    });
    REQUIRE(c.threw);
    CHECK(c.kind == ErrorKind::numerical);
    CHECK(contains(c.message, "not positive definite"));
  }
  CHECK(capture([&] {
          EfficientEstimate(t, Eigen::MatrixXd::Identity(2, 2), 0);
        }).threw);
  CHECK(capture([&] {
          EfficientEstimate(t, Eigen::MatrixXd::Identity(3, 3), 10);
        }).threw);
  Eigen::VectorXd nan = t;
  nan(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(capture([&] {
          EfficientEstimate(nan, Eigen::MatrixXd::Identity(2, 2), 10);
        }).threw);
}

TEST_CASE("one-step update leaves feasible points alone") {
  const ConstraintSystem circle = circle_constraint();
  const EfficientEstimate on(vec2(1.0, 0.0), Eigen::MatrixXd::Identity(2, 2),
                             50);
  const Eigen::VectorXd star = one_step_update(on, circle);
  CHECK(star(0) == 1.0);  // S evaluates to exactly zero here
  CHECK(star(1) == 0.0);

  const EfficientEstimate near(vec2(0.6, 0.8), Eigen::MatrixXd::Identity(2, 2),
                               50);
  const Eigen::VectorXd star2 = one_step_update(near, circle);
  CHECK(max_abs_diff(star2, vec2(0.6, 0.8)) <= 1e-14);
}

TEST_CASE("one-step update averages under the difference constraint") {
  const ConstraintSystem cs = difference_constraint().to_system();
  const EfficientEstimate est(vec2(1.0, 3.0), Eigen::MatrixXd::Identity(2, 2),
                              20);
  const Eigen::VectorXd star = one_step_update(est, cs);
  CHECK(std::abs(star(0) - 2.0) <= 1e-14);
  CHECK(std::abs(star(1) - 2.0) <= 1e-14);
}

TEST_CASE("one-step update on the circle matches the hand formula") {
  const ConstraintSystem circle = circle_constraint();
  const EfficientEstimate est(vec2(0.8, 0.7), Eigen::MatrixXd::Identity(2, 2),
                              100);
  const Eigen::VectorXd star = one_step_update(est, circle);
  CHECK(max_abs_diff(star, circle_one_step_oracle(0.8, 0.7)) <= 1e-12);
  CHECK(star(0) == doctest::Approx(0.753982).epsilon(1e-6));
  CHECK(star(1) == doctest::Approx(0.659735).epsilon(1e-6));
}

TEST_CASE("one-step update propagates rank and dimension failures") {
  const ConstraintSystem circle = circle_constraint();
  const EfficientEstimate origin(vec2(0.0, 0.0),
                                 Eigen::MatrixXd::Identity(2, 2), 10);
  const auto c = capture([&] { one_step_update(origin, circle); });
  REQUIRE(c.threw);
  CHECK(c.kind == ErrorKind::numerical);

  const EfficientEstimate est3(Eigen::VectorXd::Ones(3),
                               Eigen::MatrixXd::Identity(3, 3), 10);
  CHECK(capture([&] { one_step_update(est3, circle); }).threw);
}

TEST_CASE("projection returns feasible points unchanged with zero iterations") {
  const ConstraintSystem circle = circle_constraint();
  const Eigen::VectorXd p = vec2(0.6, 0.8);
  const auto [tilde, diag] = project_to_manifold(p, circle);
  CHECK(diag.converged);
  CHECK(diag.iterations == 0);
  CHECK(tilde(0) == p(0));
  CHECK(tilde(1) == p(1));
}

TEST_CASE("projection onto the circle: radial cases") {
  const ConstraintSystem circle = circle_constraint();
  {
    const auto [tilde, diag] = project_to_manifold(vec2(2.0, 0.0), circle);
    CHECK(diag.converged);
    CHECK(diag.constraint_residual <= 1e-10);
    CHECK(max_abs_diff(tilde, vec2(1.0, 0.0)) <= 1e-10);
  }
  {
    const auto [tilde, diag] = project_to_manifold(vec2(0.8, 0.7), circle);
    CHECK(diag.converged);
    CHECK(diag.constraint_residual <= 1e-10);
    CHECK(diag.kkt_residual <= 1e-10);
    CHECK(diag.iterations >= 1);
    CHECK(max_abs_diff(tilde, unit_circle_nearest(vec2(0.8, 0.7))) <= 1e-9);
    CHECK(tilde(0) == doctest::Approx(0.752577).epsilon(1e-6));
    CHECK(tilde(1) == doctest::Approx(0.658505).epsilon(1e-6));
  }
}

TEST_CASE("projection agrees with the radial formula from random start points") {
  const ConstraintSystem circle = circle_constraint();
  std::mt19937_64 rng(11u);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int tested = 0;
  while (tested < 60) {
    const Eigen::VectorXd p = vec2(u(rng), u(rng));
    if (p.norm() < 1e-2) continue;  // stay clear of the degenerate center
    ++tested;
    const auto [tilde, diag] = project_to_manifold(p, circle);
    REQUIRE(diag.converged);
    CHECK(std::abs(tilde.norm() - 1.0) <= 1e-10);
    CHECK(max_abs_diff(tilde, unit_circle_nearest(p)) <= 1e-9);
  }
}

TEST_CASE("projection reports non-convergence instead of lying") {
  const ConstraintSystem circle = circle_constraint();
  ProjectionOptions opts;
  opts.max_iterations = 1;
  const auto [tilde, diag] = project_to_manifold(vec2(2.0, 0.0), circle, opts);
  CHECK_FALSE(diag.converged);
  CHECK(diag.kkt_residual > 1e-10);
  CHECK(tilde.allFinite());

  // An unsatisfiable constraint can never converge; it must either report
  // failure or surface a numerical error, not fabricate a solution.
  const ConstraintSystem empty(2, 1, [](const Eigen::VectorXd& t) {
    Eigen::VectorXd s(1);
    s(0) = t(0) * t(0) + t(1) * t(1) + 1.0;
    return s;
  });
  bool honest = false;
  try {
    const auto [zeta, d2] = project_to_manifold(vec2(0.3, -0.4), empty);
    honest = !d2.converged;
  } catch (const Error& e) {
    honest = e.kind() == ErrorKind::numerical;
  }
  CHECK(honest);
}

TEST_CASE("projection validates its input point") {
  const ConstraintSystem circle = circle_constraint();
  CHECK(capture([&] {
          project_to_manifold(Eigen::VectorXd::Ones(3), circle);
        }).threw);
  Eigen::VectorXd inf = vec2(1.0, 2.0);
  inf(1) = std::numeric_limits<double>::infinity();
  CHECK(capture([&] { project_to_manifold(inf, circle); }).threw);
}

TEST_CASE("full pipeline on the circle produces a feasible efficient point") {
  const ConstraintSystem circle = circle_constraint();
  const EfficientEstimate est(vec2(0.8, 0.7), Eigen::MatrixXd::Identity(2, 2),
                              100);
  const ConstrainedResult res = estimate_constrained(est, circle);

  REQUIRE(res.converged);
  CHECK(res.constraint_residual <= 1e-10);
  const Eigen::VectorXd star = circle_one_step_oracle(0.8, 0.7);
  CHECK(max_abs_diff(res.theta_star, star) <= 1e-12);
  // The nearest circle point to theta* is its radial image.
  CHECK(max_abs_diff(res.theta_tilde, unit_circle_nearest(star)) <= 1e-9);
  CHECK(std::abs(res.theta_tilde.norm() - 1.0) <= 1e-10);

  // Submodel bound: symmetric, PSD, rank k - d = 1.
  CHECK(max_abs_diff(res.bound_Q, res.bound_Q.transpose()) <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.bound_Q);
  CHECK(es.eigenvalues()(0) >= -1e-12);
  CHECK(std::abs(es.eigenvalues()(0)) <= 1e-12);
  CHECK(es.eigenvalues()(1) > 0.0);
}

TEST_CASE("full pipeline is the identity on feasible estimates") {
  const ConstraintSystem circle = circle_constraint();
  const EfficientEstimate est(vec2(1.0, 0.0), Eigen::MatrixXd::Identity(2, 2),
                              10);
  const ConstrainedResult res = estimate_constrained(est, circle);
  CHECK(res.converged);
  CHECK(res.iterations == 0);
  CHECK(res.theta_star(0) == 1.0);
  CHECK(res.theta_star(1) == 0.0);
  CHECK(res.theta_tilde(0) == 1.0);
  CHECK(res.theta_tilde(1) == 0.0);
}

TEST_CASE("full pipeline reproduces the linear closed form") {
  std::mt19937_64 rng(13u);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(k - 1));
    const Eigen::MatrixXd R =
        eqcon_test::random_full_rank(rng, d, k).transpose();
    const LinearConstraint lc(R, eqcon_test::random_vector(rng, k));
    const EfficientEstimate est(eqcon_test::random_vector(rng, k, 2.0),
                                eqcon_test::random_spd(rng, k), 40);

    const ConstrainedResult res = estimate_constrained(est, lc.to_system());
    const Eigen::VectorXd closed = linear_constrained_estimate(est, lc);
    REQUIRE(res.converged);
    CHECK(max_abs_diff(res.theta_tilde, closed) <= 1e-8);
    // The one-step correction already lands on an affine manifold, so the
    // projection accepts it unchanged.
    CHECK(max_abs_diff(res.theta_star, res.theta_tilde) == 0.0);
    CHECK(res.iterations == 0);
  }
}

TEST_CASE("constrained bound: hand-checked 2x2 cases") {
  Eigen::MatrixXd jac(1, 2);
  jac << 1.0, -1.0;
  const Eigen::MatrixXd half = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CHECK(max_abs_diff(constrained_bound(Eigen::MatrixXd::Identity(2, 2), jac),
                     half) <= 1e-15);

  jac << 1.0, 0.0;
  CHECK(max_abs_diff(constrained_bound(Eigen::MatrixXd::Identity(2, 2), jac),
                     mat2(0.0, 0.0, 0.0, 1.0)) <= 1e-15);

  jac << 1.0, -1.0;
  const Eigen::MatrixXd sixth = Eigen::MatrixXd::Constant(2, 2, 1.0 / 6.0);
  CHECK(max_abs_diff(constrained_bound(mat2(2.0, 1.0, 1.0, 2.0), jac), sixth) <=
        1e-12);
}

TEST_CASE("null-space bound: hand-checked 2x2 cases") {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXd L(2, 1);
  L << inv_sqrt2, inv_sqrt2;
  const Eigen::MatrixXd half = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CHECK(max_abs_diff(
            constrained_bound_nullspace(Eigen::MatrixXd::Identity(2, 2), L),
            half) <= 1e-12);

  Eigen::MatrixXd L2(2, 1);
  L2 << 0.0, 1.0;
  CHECK(max_abs_diff(
            constrained_bound_nullspace(Eigen::MatrixXd::Identity(2, 2), L2),
            mat2(0.0, 0.0, 0.0, 1.0)) <= 1e-15);

  const Eigen::MatrixXd sixth = Eigen::MatrixXd::Constant(2, 2, 1.0 / 6.0);
  CHECK(max_abs_diff(constrained_bound_nullspace(mat2(2.0, 1.0, 1.0, 2.0), L),
                     sixth) <= 1e-12);
}

TEST_CASE("both bound formulas coincide on random problems") {
  std::mt19937_64 rng(17u);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 7);
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(k - 1));
    const Eigen::MatrixXd info = eqcon_test::random_spd(rng, k);
    const Eigen::MatrixXd jac = eqcon_test::random_full_rank(rng, d, k);
    const Eigen::MatrixXd b1 = constrained_bound(info, jac);
    const Eigen::MatrixXd b2 =
        constrained_bound_nullspace(info, null_space_basis(jac));
    CHECK(max_abs_diff(b1, b2) <= 1e-9);

    // Restricting can only shrink the attainable covariance.
    const Eigen::MatrixXd iinv = info.llt().solve(
        Eigen::MatrixXd::Identity(k, k));
    CHECK(min_eigenvalue(iinv - b1) >= -1e-10);

    // The bound itself stays symmetric PSD with a d-dimensional kernel.
    CHECK(max_abs_diff(b1, b1.transpose()) <= 1e-12);
    CHECK(min_eigenvalue(b1) >= -1e-10);
    CHECK((jac * b1).cwiseAbs().maxCoeff() <= 1e-9 * info.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("null-space bound is invariant under basis rotation") {
  std::mt19937_64 rng(19u);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 7);
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(k - 1));
    const Eigen::MatrixXd info = eqcon_test::random_spd(rng, k);
    const Eigen::MatrixXd L =
        null_space_basis(eqcon_test::random_full_rank(rng, d, k));
    const Eigen::MatrixXd Q = eqcon_test::random_orthogonal(rng, k - d);
    CHECK(max_abs_diff(constrained_bound_nullspace(info, L * Q),
                       constrained_bound_nullspace(info, L)) <= 1e-10);
  }
}

TEST_CASE("influence projector is an oblique projection killing the jacobian") {
  std::mt19937_64 rng(23u);
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 7);
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(k - 1));
    const Eigen::MatrixXd info = eqcon_test::random_spd(rng, k);
    const Eigen::MatrixXd jac = eqcon_test::random_full_rank(rng, d, k);
    const Eigen::MatrixXd m = influence_projector(info, jac);
    CHECK(max_abs_diff(m * m, m) <= 1e-10);
    CHECK((jac * m).cwiseAbs().maxCoeff() <=
          1e-10 * std::max(1.0, jac.cwiseAbs().maxCoeff()));
    // The bound is the projector pushed through the inverse information.
    CHECK(max_abs_diff(constrained_bound(info, jac) * info, m) <= 1e-9);
  }
}

TEST_CASE("bound and projector reject malformed input") {
  Eigen::MatrixXd jac(1, 2);
  jac << 1.0, -1.0;
  CHECK(capture([&] {
          constrained_bound(mat2(1.0, 2.0, 2.0, 1.0), jac);  // indefinite
        }).threw);
  Eigen::MatrixXd wide(2, 2);
  wide << 1.0, 0.0, 0.0, 1.0;
  CHECK(capture([&] {
          constrained_bound(Eigen::MatrixXd::Identity(2, 2), wide);  // d = k
        }).threw);
  Eigen::MatrixXd rankdef(1, 3);
  rankdef << 0.0, 0.0, 0.0;
  const auto c = capture(
      [&] { constrained_bound(Eigen::MatrixXd::Identity(3, 3), rankdef); });
  REQUIRE(c.threw);
  CHECK(c.kind == ErrorKind::numerical);

  Eigen::MatrixXd L(2, 1);
  L << 0.0, 0.0;
  CHECK(capture([&] {
          constrained_bound_nullspace(Eigen::MatrixXd::Identity(2, 2), L);
        }).threw);
}

TEST_CASE("efficient score multiplies rows by the information matrix") {
  InfluenceSample sample;
  sample.values = Eigen::MatrixXd(2, 2);
  sample.values << 1.0, -1.0, 1.0, 0.0;
  sample.tag = ModelTag::P;

  const InfluenceSample same =
      efficient_score(Eigen::MatrixXd::Identity(2, 2), sample);
  CHECK(max_abs_diff(same.values, sample.values) == 0.0);

  const InfluenceSample doubled =
      efficient_score(2.0 * Eigen::MatrixXd::Identity(2, 2), sample);
  CHECK(doubled.values(0, 0) == 2.0);
  CHECK(doubled.values(0, 1) == -2.0);

  const InfluenceSample mixed =
      efficient_score(mat2(2.0, 1.0, 1.0, 2.0), sample);
  CHECK(mixed.values(1, 0) == 2.0);  // row (1, 0) maps to (2, 1)
  CHECK(mixed.values(1, 1) == 1.0);

  InfluenceSample q = sample;
  q.tag = ModelTag::Q;
  CHECK(capture([&] {
          efficient_score(Eigen::MatrixXd::Identity(2, 2), q);
        }).threw);
}

TEST_CASE("constrained influence projects rows into the tangent space") {
  Eigen::MatrixXd jac(1, 2);
  jac << 1.0, -1.0;

  InfluenceSample sample;
  sample.values = Eigen::MatrixXd(3, 2);
  sample.values << 1.0, 3.0, 0.0, 0.0, 1.0, 0.0;
  sample.tag = ModelTag::P;

  const InfluenceSample sym =
      constrained_influence(sample, Eigen::MatrixXd::Identity(2, 2), jac);
  CHECK(sym.tag == ModelTag::Q);
  CHECK(std::abs(sym.values(0, 0) - 2.0) <= 1e-14);  // (1,3) -> (2,2)
  CHECK(std::abs(sym.values(0, 1) - 2.0) <= 1e-14);
  CHECK(sym.values(1, 0) == 0.0);  // zero row is a fixed point
  CHECK(sym.values(1, 1) == 0.0);

  const InfluenceSample weighted =
      constrained_influence(sample, mat2(2.0, 1.0, 1.0, 2.0), jac);
  CHECK(std::abs(weighted.values(2, 0) - 0.5) <= 1e-14);  // (1,0) -> (.5,.5)
  CHECK(std::abs(weighted.values(2, 1) - 0.5) <= 1e-14);

  InfluenceSample q = sample;
  q.tag = ModelTag::Q;
  CHECK(capture([&] {
          constrained_influence(q, Eigen::MatrixXd::Identity(2, 2), jac);
        }).threw);
}

TEST_CASE("linear closed form: common-mean style examples") {
  {
    Eigen::VectorXd xbar(3);
    xbar << 1.0, 2.0, 3.0;
    const EfficientEstimate est(xbar, Eigen::MatrixXd::Identity(3, 3), 30);
    const Eigen::VectorXd tilde =
        linear_constrained_estimate(est, equality_constraint(3));
    CHECK(max_abs_diff(tilde, Eigen::VectorXd::Constant(3, 2.0)) <= 1e-14);
  }
  {
    // Information diag(1, 1/4): the weighted mean of (0, 5) is 1.
    const EfficientEstimate est(vec2(0.0, 5.0), mat2(1.0, 0.0, 0.0, 0.25), 30);
    const Eigen::VectorXd tilde =
        linear_constrained_estimate(est, equality_constraint(2));
    CHECK(max_abs_diff(tilde, Eigen::VectorXd::Constant(2, 1.0)) <= 1e-14);
  }
  {
    // Already feasible: the correction term is exactly zero.
    const EfficientEstimate est(vec2(3.0, 3.0), mat2(1.0, 0.0, 0.0, 0.25), 30);
    const Eigen::VectorXd tilde =
        linear_constrained_estimate(est, equality_constraint(2));
    CHECK(tilde(0) == 3.0);
    CHECK(tilde(1) == 3.0);
  }
}

TEST_CASE("linear closed form satisfies the constraint and both writings") {
  std::mt19937_64 rng(29u);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 7);
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(k - 1));
    const Eigen::MatrixXd R =
        eqcon_test::random_full_rank(rng, d, k).transpose();
    const Eigen::VectorXd alpha = eqcon_test::random_vector(rng, k);
    const LinearConstraint lc(R, alpha);
    const Eigen::MatrixXd info = eqcon_test::random_spd(rng, k);
    const EfficientEstimate est(eqcon_test::random_vector(rng, k, 2.0), info,
                                25);

    const Eigen::VectorXd tilde = linear_constrained_estimate(est, lc);
    CHECK((R.transpose() * (tilde - alpha)).cwiseAbs().maxCoeff() <= 1e-10);

    // Null-space writing of the same estimator.
    const Eigen::MatrixXd L = null_space_basis(R.transpose());
    const Eigen::MatrixXd g = L.transpose() * info * L;
    const Eigen::VectorXd via_L =
        alpha + L * g.llt().solve(L.transpose() * info *
                                  (est.theta_hat - alpha));
    CHECK(max_abs_diff(tilde, via_L) <= 1e-10);
  }
}
