#include "models.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "normal.hpp"

namespace eqcon {

namespace {

Eigen::MatrixXd checked_spd_inverse(const Eigen::MatrixXd& m,
                                    const char* label) {
  const Eigen::Index k = m.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(k - 1);
  if (lmin <= static_cast<double>(k) * std::numeric_limits<double>::epsilon() *
                  std::max(lmax, 0.0)) {
    throw_numerical(std::string(label) + " is singular or not positive "
                    "definite (min eigenvalue " + std::to_string(lmin) + ")");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw_numerical(std::string(label) + " is not positive definite");
  }
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
  return 0.5 * (inv + inv.transpose());
}

}  // namespace

DataMatrix::DataMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() < 2) {
    throw_invalid("data matrix needs at least 2 observations, got " +
                  std::to_string(values_.rows()));
  }
  if (values_.cols() < 1) throw_invalid("data matrix has no columns");
  if (!values_.allFinite()) {
    throw_invalid("data matrix contains non-finite entries");
  }
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  if (n < 2) throw_invalid("sample covariance needs at least 2 rows");
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  return 0.5 * (cov + cov.transpose());
}

EfficientEstimate fit_mvn_mean(const DataMatrix& data) {
  const Eigen::Index n = data.rows(), k = data.cols();
  if (k < 2) {
    throw_invalid("mean model needs at least 2 columns, got " +
                  std::to_string(k));
  }
  if (n <= k) {
    throw_invalid("mean model needs more observations than columns (n=" +
                  std::to_string(n) + ", k=" + std::to_string(k) + ")");
  }
  const Eigen::VectorXd mean = data.values().colwise().mean();
  const Eigen::MatrixXd info =
      checked_spd_inverse(sample_covariance(data.values()),
                          "sample covariance matrix");
  return EfficientEstimate(mean, info, n);
}

std::pair<EfficientEstimate, LinearConstraint> fit_common_mean(
    const DataMatrix& data) {
  EfficientEstimate est = fit_mvn_mean(data);
  LinearConstraint lc = equality_constraint(est.dim());
  return {std::move(est), std::move(lc)};
}

LocationScaleInfo::LocationScaleInfo(double i11, double i12, double i22)
    : I11(i11), I12(i12), I22(i22) {
  if (!(I11 > 0.0) || !(I22 > 0.0) || !(I11 * I22 - I12 * I12 > 0.0)) {
    throw_invalid("location-scale information pattern is not positive "
                  "definite");
  }
}

std::pair<EfficientEstimate, LocationScaleInfo> fit_location_scale_normal(
    const DataMatrix& data) {
  if (data.cols() != 1) {
    throw_invalid("location-scale model expects a single column, got " +
                  std::to_string(data.cols()));
  }
  const Eigen::Index n = data.rows();
  const Eigen::VectorXd x = data.values().col(0);
  const double mu = x.mean();
  const double var = (x.array() - mu).square().sum() / static_cast<double>(n);
  const double sigma = std::sqrt(var);
  if (!(sigma > 0.0)) {
    throw_numerical("sample has zero variance; scale is not identifiable");
  }
  Eigen::VectorXd theta(2);
  theta << mu, sigma;
  Eigen::MatrixXd info(2, 2);
  info << 1.0 / var, 0.0, 0.0, 2.0 / var;
  return {EfficientEstimate(theta, info, n), LocationScaleInfo::normal()};
}

LinearConstraint cv_linear_constraint(double c) {
  if (!std::isfinite(c)) throw_invalid("cv constraint needs a finite c");
  Eigen::MatrixXd r(2, 1);
  r << c, -1.0;
  return LinearConstraint(r, Eigen::VectorXd::Zero(2));
}

ConstraintSystem cv_constraint(double c, CvForm form) {
  if (!std::isfinite(c)) throw_invalid("cv constraint needs a finite c");
  if (form == CvForm::linear) {
    return cv_linear_constraint(c).to_system();
  }
  if (c == 0.0) {
    throw_invalid("cv constraint in ratio form requires c != 0");
  }
  return ConstraintSystem(
      2, 1,
      [c](const Eigen::VectorXd& t) -> Eigen::VectorXd {
        if (std::abs(t(0)) <= 1e-12) {
          throw_numerical("cv ratio constraint is undefined at theta_1 = 0");
        }
        Eigen::VectorXd s(1);
        s(0) = t(1) / t(0) - c;
        return s;
      },
      [](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
        if (std::abs(t(0)) <= 1e-12) {
          throw_numerical("cv ratio constraint is undefined at theta_1 = 0");
        }
        Eigen::MatrixXd j(1, 2);
        j(0, 0) = -t(1) / (t(0) * t(0));
        j(0, 1) = 1.0 / t(0);
        return j;
      });
}

Eigen::Vector2d cv_one_step(const LocationScaleInfo& info, double mu_bar,
                            double sigma_bar, double c) {
  if (!std::isfinite(mu_bar) || !std::isfinite(sigma_bar) ||
      !std::isfinite(c)) {
    throw_invalid("cv estimate needs finite inputs");
  }
  const double denom = info.I11 + 2.0 * c * info.I12 + c * c * info.I22;
  const double mu = ((info.I11 + c * info.I12) * mu_bar +
                     (info.I12 + c * info.I22) * sigma_bar) /
                    denom;
  return {mu, c * mu};
}

Eigen::Vector2d cv_one_step_normal(double mu_bar, double sigma_bar, double c) {
  return cv_one_step(LocationScaleInfo::normal(), mu_bar, sigma_bar, c);
}

double normal_score_of_rank(Eigen::Index r, Eigen::Index n) {
  const Eigen::Index mirror = n + 1 - r;
  if (r == mirror) return 0.0;
  if (r < mirror) {
    return normal_quantile(static_cast<double>(r) /
                           static_cast<double>(n + 1));
  }
  return -normal_quantile(static_cast<double>(mirror) /
                          static_cast<double>(n + 1));
}

Eigen::VectorXd normal_scores(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 2) throw_invalid("normal scores need at least 2 observations");
  if (!x.allFinite()) throw_invalid("normal scores input is not finite");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&x](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
  for (Eigen::Index i = 1; i < n; ++i) {
    if (x(order[static_cast<std::size_t>(i - 1)]) ==
        x(order[static_cast<std::size_t>(i)])) {
      throw_invalid("ties detected (value " +
                    std::to_string(x(order[static_cast<std::size_t>(i)])) +
                    " repeats); ranks are not unique");
    }
  }
  Eigen::VectorXd scores(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scores(order[static_cast<std::size_t>(i)]) = normal_score_of_rank(i + 1, n);
  }
  return scores;
}

double vdw_rank_correlation(const Eigen::VectorXd& x,
                            const Eigen::VectorXd& y) {
  if (x.size() != y.size()) {
    throw_invalid("rank correlation inputs have different lengths");
  }
  const Eigen::Index n = x.size();
  const Eigen::VectorXd sx = normal_scores(x);
  const Eigen::VectorXd sy = normal_scores(y);
  double num = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) num += sx(i) * sy(i);
  double den = 0.0;
  for (Eigen::Index r = 1; r <= n; ++r) {
    const double s = normal_score_of_rank(r, n);
    den += s * s;
  }
  return std::clamp(num / den, -1.0, 1.0);
}

namespace {

// Influence rows shared by the fit and the standalone accessor. Scores are
// one vector per column; pairs run lexicographically.
Eigen::MatrixXd influence_from_scores(const std::vector<Eigen::VectorXd>& z,
                                      const Eigen::VectorXd& rho) {
  const int m = static_cast<int>(z.size());
  const Eigen::Index n = z[0].size();
  const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
  Eigen::MatrixXd rows(n, k);
  Eigen::Index col = 0;
  for (int r = 0; r < m; ++r) {
    for (int s = r + 1; s < m; ++s, ++col) {
      for (Eigen::Index i = 0; i < n; ++i) {
        rows(i, col) = copula_pair_influence(z[static_cast<std::size_t>(r)](i),
                                             z[static_cast<std::size_t>(s)](i),
                                             rho(col));
      }
    }
  }
  return rows;
}

std::vector<Eigen::VectorXd> column_scores(const DataMatrix& data) {
  std::vector<Eigen::VectorXd> z;
  z.reserve(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    try {
      z.push_back(normal_scores(data.values().col(c)));
    } catch (const Error& e) {
      throw Error(e.kind(),
                  "column " + std::to_string(c + 1) + ": " + e.what());
    }
  }
  return z;
}

}  // namespace

InfluenceSample copula_influence(const DataMatrix& data,
                                 const Eigen::VectorXd& rho) {
  const int m = static_cast<int>(data.cols());
  if (m < 2) throw_invalid("copula influence needs at least 2 columns");
  const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
  if (rho.size() != k) {
    throw_invalid("expected " + std::to_string(k) +
                  " pairwise correlations, got " + std::to_string(rho.size()));
  }
  if ((rho.array().abs() > 1.0).any()) {
    throw_invalid("pairwise correlations must lie in [-1, 1]");
  }
  return InfluenceSample{influence_from_scores(column_scores(data), rho),
                         ModelTag::P};
}

CopulaFit fit_exchangeable_copula(const DataMatrix& data) {
  const int m = static_cast<int>(data.cols());
  if (m < 2) {
    throw_invalid("copula model needs at least 2 columns, got " +
                  std::to_string(m));
  }
  const Eigen::Index n = data.rows();
  const std::vector<Eigen::VectorXd> z = column_scores(data);
  double den = 0.0;
  for (Eigen::Index r = 1; r <= n; ++r) {
    const double s = normal_score_of_rank(r, n);
    den += s * s;
  }
  const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
  Eigen::VectorXd rho(k);
  Eigen::Index col = 0;
  for (int r = 0; r < m; ++r) {
    for (int s = r + 1; s < m; ++s, ++col) {
      double num = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        num += z[static_cast<std::size_t>(r)](i) *
               z[static_cast<std::size_t>(s)](i);
      }
      rho(col) = std::clamp(num / den, -1.0, 1.0);
    }
  }
  const Eigen::MatrixXd rows = influence_from_scores(z, rho);
  const Eigen::MatrixXd info =
      checked_spd_inverse(sample_covariance(rows),
                          "influence sample covariance");
  CopulaFit fit{EfficientEstimate(rho, info, n), std::nullopt};
  if (k >= 2) fit.constraint = equality_constraint(static_cast<int>(k));
  return fit;
}

Eigen::VectorXd exchangeable_average(const Eigen::VectorXd& theta_hat) {
  const Eigen::Index k = theta_hat.size();
  if (k < 1) throw_invalid("average of an empty estimate");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) sum += theta_hat(i);
  return Eigen::VectorXd::Constant(k, sum / static_cast<double>(k));
}

Eigen::MatrixXd correlation_from_pairwise(int m, const Eigen::VectorXd& rho) {
  if (m < 2) throw_invalid("correlation matrix needs at least 2 variables");
  const Eigen::Index k = static_cast<Eigen::Index>(m) * (m - 1) / 2;
  if (rho.size() != k) {
    throw_invalid("expected " + std::to_string(k) +
                  " pairwise correlations, got " + std::to_string(rho.size()));
  }
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(m, m);
  Eigen::Index col = 0;
  for (int r = 0; r < m; ++r) {
    for (int s = r + 1; s < m; ++s, ++col) {
      corr(r, s) = rho(col);
      corr(s, r) = rho(col);
    }
  }
  return corr;
}

Eigen::MatrixXd copula_influence_covariance(const Eigen::MatrixXd& corr) {
  const Eigen::Index m = corr.rows();
  if (corr.cols() != m || m < 2) {
    throw_invalid("correlation matrix must be square with at least 2 rows");
  }
  if (((corr.diagonal().array() - 1.0).abs() > 1e-12).any()) {
    throw_invalid("correlation matrix must have unit diagonal");
  }
  if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw_invalid("correlation matrix must be symmetric");
  }

  // E[Z_i Z_j Z_k Z_l] for a centered Gaussian via Wick pairing.
  auto e4 = [&corr](Eigen::Index i, Eigen::Index j, Eigen::Index k,
                    Eigen::Index l) {
    return corr(i, j) * corr(k, l) + corr(i, k) * corr(j, l) +
           corr(i, l) * corr(j, k);
  };

  const Eigen::Index npairs = m * (m - 1) / 2;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(npairs));
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index s = r + 1; s < m; ++s) pairs.emplace_back(r, s);
  }

  Eigen::MatrixXd cov(npairs, npairs);
  for (Eigen::Index a = 0; a < npairs; ++a) {
    const auto [r, s] = pairs[static_cast<std::size_t>(a)];
    const double rho_a = corr(r, s);
    for (Eigen::Index b = a; b < npairs; ++b) {
      const auto [u, v] = pairs[static_cast<std::size_t>(b)];
      const double rho_b = corr(u, v);
      const double t1 = e4(r, s, u, v);
      const double t2 = e4(r, s, u, u) + e4(r, s, v, v);
      const double t3 = e4(r, r, u, v) + e4(s, s, u, v);
      const double t4 = e4(r, r, u, u) + e4(r, r, v, v) + e4(s, s, u, u) +
                        e4(s, s, v, v);
      const double value = t1 - 0.5 * rho_b * t2 - 0.5 * rho_a * t3 +
                           0.25 * rho_a * rho_b * t4;
      cov(a, b) = value;
      cov(b, a) = value;
    }
  }
  return cov;
}

}  // namespace eqcon
