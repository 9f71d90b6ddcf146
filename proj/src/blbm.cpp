#include "pbl/blbm.hpp"

#include <cmath>

namespace pbl {

GaussianPosterior GaussianPosterior::dense(Vector mean, Matrix cov) {
  if (mean.size() != cov.rows())
    throw std::invalid_argument("GaussianPosterior: mean/cov mismatch");
  GaussianPosterior post;
  post.mean_ = std::move(mean);
  post.chol_ = cholesky(cov);  // throws FactorizationError if not SPD
  post.cov_ = std::move(cov);
  post.diagonal_ = false;
  return post;
}

GaussianPosterior GaussianPosterior::diagonal(Vector mean, Vector variances) {
  if (mean.size() != variances.size())
    throw std::invalid_argument("GaussianPosterior: mean/var mismatch");
  if ((variances.array() <= 0.0).any())
    throw std::invalid_argument(
        "GaussianPosterior: diagonal variances must be positive");
  GaussianPosterior post;
  post.mean_ = std::move(mean);
  post.var_diag_ = std::move(variances);
  post.diagonal_ = true;
  return post;
}

double GaussianPosterior::mahalanobis_sq(const Vector& w) const {
  if (w.size() != mean_.size())
    throw std::invalid_argument("mahalanobis_sq: dimension mismatch");
  const Vector d = w - mean_;
  if (diagonal_) return (d.array().square() / var_diag_.array()).sum();
  // d^T (L L^T)^{-1} d = |L^{-1} d|^2
  const Vector y = chol_.triangularView<Eigen::Lower>().solve(d);
  return y.squaredNorm();
}

double GaussianPosterior::quadratic(const Vector& phi) const {
  if (phi.size() != mean_.size())
    throw std::invalid_argument("quadratic: dimension mismatch");
  if (diagonal_) return (phi.array().square() * var_diag_.array()).sum();
  return phi.dot(cov_ * phi);
}

Matrix GaussianPosterior::sample(int count, Rng& rng) const {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  const Eigen::Index p = mean_.size();
  Matrix out(count, p);
  if (diagonal_) {
    const Vector stds = var_diag_.cwiseSqrt();
    for (int i = 0; i < count; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        out(i, j) = mean_(j) + stds(j) * rng.normal();
    return out;
  }
  Vector z(p);
  for (int i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(j) = rng.normal();
    out.row(i) = (mean_ + chol_ * z).transpose();
  }
  return out;
}

double estimate_noise_variance(const Matrix& phi, const Vector& rewards,
                               double prior_variance) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index p = phi.cols();
  if (n < p + 1)
    throw std::invalid_argument(
        "noise variance estimate needs n >= p + 1 samples");
  const double ridge = 1.0 / prior_variance;
  Matrix a = phi.transpose() * phi;
  a.diagonal().array() += ridge;
  const Matrix l = cholesky(a);
  const Matrix a_inv = chol_inverse(l);
  const Vector w = a_inv * (phi.transpose() * rewards);
  const double rss = (rewards - phi * w).squaredNorm();
  // trace(Phi A^{-1} Phi^T) = p - ridge * trace(A^{-1})
  const double hat_trace = static_cast<double>(p) - ridge * a_inv.trace();
  const double dof = static_cast<double>(n) - hat_trace;
  return std::max(rss / dof, 1e-6);
}

GaussianPosterior blbm_fit_features(const Matrix& phi, const Vector& rewards,
                                    const BlbmConfig& config) {
  if (!(config.prior_variance > 0.0))
    throw std::invalid_argument("blbm_fit: prior_variance must be > 0");
  if (config.noise_variance && !(*config.noise_variance > 0.0))
    throw std::invalid_argument("blbm_fit: noise_variance must be > 0");
  if (phi.rows() != rewards.size())
    throw std::invalid_argument("blbm_fit: feature/reward length mismatch");

  const Eigen::Index p = phi.cols();
  if (phi.rows() == 0) {
    return GaussianPosterior::dense(
        Vector::Zero(p),
        Matrix::Identity(p, p) * config.prior_variance);
  }
  const double noise_var =
      config.noise_variance
          ? *config.noise_variance
          : estimate_noise_variance(phi, rewards, config.prior_variance);

  Matrix precision = (phi.transpose() * phi) / noise_var;
  precision.diagonal().array() += 1.0 / config.prior_variance;
  const Matrix l = cholesky(precision);
  Matrix cov = chol_inverse(l);
  cov = 0.5 * (cov + cov.transpose());  // keep it exactly symmetric
  const Vector mean = cov * (phi.transpose() * rewards) / noise_var;
  return GaussianPosterior::dense(mean, std::move(cov));
}

GaussianPosterior blbm_fit(const Dataset& data, const FeatureMap& map,
                           const BlbmConfig& config) {
  data.validate();
  const int n = data.size();
  Matrix phi(n, map.joint_dim());
  if (n > 0) {
    phi.setZero();
    const Matrix state_feats = encode_states(map, data.states);
    for (int i = 0; i < n; ++i)
      phi.row(i).segment(
          static_cast<Eigen::Index>(data.actions(i)) * map.num_features,
          map.num_features) = state_feats.row(i);
  }
  return blbm_fit_features(phi, data.rewards, config);
}

double blbm_lower_bound(const GaussianPosterior& post, const Vector& phi,
                        double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("blbm_lower_bound: alpha must be in (0,1)");
  const double radius_sq = chi2_quantile(1.0 - alpha, post.dim());
  return post.mean().dot(phi) -
         std::sqrt(radius_sq) * std::sqrt(std::max(0.0, post.quadratic(phi)));
}

}  // namespace pbl
