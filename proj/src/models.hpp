#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

#include "constraint.hpp"
#include "estimator.hpp"

namespace eqcon {

// Observation matrix, one row per observation. Requires at least two rows
// and finite entries; fits place further demands (e.g. n > k).
class DataMatrix {
 public:
  explicit DataMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
};

// Mean-centered sample covariance with the n - 1 denominator.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& rows);

// --- several samples with a common mean -----------------------------------

// Coordinate-wise sample means with the inverse sample covariance as the
// information estimate, paired with the all-coordinates-equal constraint.
std::pair<EfficientEstimate, LinearConstraint> fit_common_mean(
    const DataMatrix& data);

// Mean estimate only (no equality constraint attached); also used for
// arbitrary restrictions of a multivariate normal mean.
EfficientEstimate fit_mvn_mean(const DataMatrix& data);

// --- univariate location-scale under a normal baseline --------------------

// Fisher information of a location-scale family per unit of sigma^-2,
// i.e. the information at (mu, sigma) is (1/sigma^2) * [[I11, I12],[I12, I22]].
struct LocationScaleInfo {
  double I11 = 0.0;
  double I12 = 0.0;
  double I22 = 0.0;

  LocationScaleInfo(double i11, double i12, double i22);

  static LocationScaleInfo normal() { return {1.0, 0.0, 2.0}; }
};

// theta_hat = (mean, sd with the 1/n denominator), information
// sigma_hat^-2 diag(1, 2).
std::pair<EfficientEstimate, LocationScaleInfo> fit_location_scale_normal(
    const DataMatrix& data);

enum class CvForm { linear, ratio };

// Fixed coefficient of variation sigma = c * mu. The linear form is
// S = c * theta_1 - theta_2; the ratio form is S = theta_2 / theta_1 - c and
// is undefined at theta_1 = 0.
ConstraintSystem cv_constraint(double c, CvForm form);
LinearConstraint cv_linear_constraint(double c);

// Restricted estimate for a general location-scale information pattern:
//   mu~ = (I11 + 2 c I12 + c^2 I22)^-1 [(I11 + c I12) mu_bar
//                                       + (I12 + c I22) sigma_bar],
// returning (mu~, c mu~).
Eigen::Vector2d cv_one_step(const LocationScaleInfo& info, double mu_bar,
                            double sigma_bar, double c);
Eigen::Vector2d cv_one_step_normal(double mu_bar, double sigma_bar, double c);

// --- rank correlations under a Gaussian copula -----------------------------

// Normal scores of a sample: the rank r maps to the standard normal quantile
// at r / (n + 1), with the sign applied to the smaller of (r, n + 1 - r) so
// that score(r) + score(n + 1 - r) is exactly zero. Ties are rejected.
Eigen::VectorXd normal_scores(const Eigen::VectorXd& x);

// Score value attached to rank r out of n (same symmetric rule).
double normal_score_of_rank(Eigen::Index r, Eigen::Index n);

// Normal-scores rank correlation: sum of score products over the sum of
// squared scores. Exactly antisymmetric under order reversal of one input.
double vdw_rank_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Influence contribution of one observation to the pair (r, s):
//   z_r z_s - (rho/2)(z_r^2 + z_s^2).
inline double copula_pair_influence(double z_r, double z_s, double rho) {
  return z_r * z_s - 0.5 * rho * (z_r * z_r + z_s * z_s);
}

// n x k influence rows (k = m(m-1)/2 pairs in lexicographic order) from the
// normal scores of the data and plugged-in pairwise correlations.
InfluenceSample copula_influence(const DataMatrix& data,
                                 const Eigen::VectorXd& rho);

struct CopulaFit {
  EfficientEstimate estimate;  // pairwise correlations, plug-in information
  // All-pairs-equal restriction; absent for m = 2 where the single
  // correlation leaves nothing to restrict.
  std::optional<LinearConstraint> constraint;
};

// Pairwise normal-scores correlations with information estimated as the
// inverse sample covariance of the influence rows.
CopulaFit fit_exchangeable_copula(const DataMatrix& data);

// Equal-weight average of the pairwise estimates, broadcast back to all
// pairs. Summation runs in index order so the result is reproducible
// bit-for-bit.
Eigen::VectorXd exchangeable_average(const Eigen::VectorXd& theta_hat);

// Covariance of the influence components under a Gaussian copula with the
// given latent correlation matrix, evaluated by Wick reduction of the
// fourth moments. The theoretical information is its inverse.
Eigen::MatrixXd copula_influence_covariance(const Eigen::MatrixXd& corr);

// m x m correlation matrix from k = m(m-1)/2 pairwise entries in
// lexicographic order.
Eigen::MatrixXd correlation_from_pairwise(int m, const Eigen::VectorXd& rho);

}  // namespace eqcon
