#pragma once

#include <optional>

#include "pbl/dataset.hpp"
#include "pbl/features.hpp"
#include "pbl/numerics.hpp"

namespace pbl {

/// Gaussian distribution over model weights, either with a dense SPD
/// covariance (conjugate linear-basis fit) or a positive diagonal (mean
/// field variational fit). Construct through the factories so the
/// covariance is validated and factorized exactly once.
class GaussianPosterior {
 public:
  GaussianPosterior() = default;

  static GaussianPosterior dense(Vector mean, Matrix cov);
  static GaussianPosterior diagonal(Vector mean, Vector variances);

  int dim() const { return static_cast<int>(mean_.size()); }
  bool is_diagonal() const { return diagonal_; }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Vector& var_diag() const { return var_diag_; }
  const Matrix& chol() const { return chol_; }

  /// (w - mean)^T Sigma^{-1} (w - mean), via triangular solves.
  double mahalanobis_sq(const Vector& w) const;

  /// phi^T Sigma phi (predictive variance of w^T phi).
  double quadratic(const Vector& phi) const;

  /// count x dim draws; deterministic given the generator state.
  Matrix sample(int count, Rng& rng) const;

 private:
  Vector mean_;
  Matrix cov_;       // dense covariance (empty when diagonal)
  Matrix chol_;      // lower Cholesky factor of cov_ (empty when diagonal)
  Vector var_diag_;  // diagonal variances (empty when dense)
  bool diagonal_ = false;
};

struct BlbmConfig {
  double prior_variance = 1.0;
  // Gaussian noise variance; unset means the two-pass residual estimate.
  std::optional<double> noise_variance;
};

/// Conjugate Gaussian fit on pre-encoded features (n x p):
/// Sigma = (Phi^T Phi / s2 + I / tau2)^{-1}, mean = Sigma Phi^T r / s2.
/// With n = 0 rows this is the prior N(0, tau2 I).
GaussianPosterior blbm_fit_features(const Matrix& phi, const Vector& rewards,
                                    const BlbmConfig& config);

/// Fit on raw data; rows are encoded with encode_state_action.
GaussianPosterior blbm_fit(const Dataset& data, const FeatureMap& map,
                           const BlbmConfig& config);

/// Exact minimum of w^T phi over the credible ellipsoid
/// {(w - mean)^T Sigma^{-1} (w - mean) <= chi2_quantile(1 - alpha, p)}:
/// mean^T phi - sqrt(chi2) * sqrt(phi^T Sigma phi).
double blbm_lower_bound(const GaussianPosterior& post, const Vector& phi,
                        double alpha);

/// Residual-based noise variance estimate used when BlbmConfig leaves it
/// unset: ridge pass at lambda = 1/prior_variance, then
/// rss / (n - trace(hat)), floored at 1e-6. Requires n >= p + 1.
double estimate_noise_variance(const Matrix& phi, const Vector& rewards,
                               double prior_variance);

}  // namespace pbl
