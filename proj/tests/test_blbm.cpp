#include <doctest.h>

#include <cmath>

#include "pbl/blbm.hpp"

using namespace pbl;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("empty dataset recovers the prior") {
  BlbmConfig config;
  config.prior_variance = 2.5;
  config.noise_variance = 1.0;
  const GaussianPosterior post =
      blbm_fit_features(Matrix(0, 4), Vector(0), config);
  CHECK(post.dim() == 4);
  CHECK(post.mean().cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.cov() - 2.5 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("single observation with unit feature gives the hand solution") {
  Matrix phi(1, 1);
  phi(0, 0) = 1.0;
  Vector r(1);
  r(0) = 1.0;
  BlbmConfig config;
  config.prior_variance = 1.0;
  config.noise_variance = 1.0;
  const GaussianPosterior post = blbm_fit_features(phi, r, config);
  CHECK(post.mean()(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(post.cov()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior mean equals the ridge solution") {
  const int n = 200, p = 8;
  const Matrix phi = random_matrix(n, p, 3);
  const Vector r = random_matrix(n, 1, 4).col(0);
  BlbmConfig config;
  config.prior_variance = 0.7;
  config.noise_variance = 0.3;
  const GaussianPosterior post = blbm_fit_features(phi, r, config);

  // Direct normal-equations oracle.
  Matrix a = phi.transpose() * phi;
  a.diagonal().array() += 0.3 / 0.7;
  const Vector ridge = a.ldlt().solve(phi.transpose() * r);
  CHECK((post.mean() - ridge).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("noise variance estimate recovers the simulated scale") {
  const int n = 4000, p = 6;
  const Matrix phi = random_matrix(n, p, 11);
  const Vector w0 = random_matrix(p, 1, 12).col(0);
  Rng rng(13);
  Vector r(n);
  for (int i = 0; i < n; ++i) r(i) = phi.row(i).dot(w0) + 0.1 * rng.normal();
  const double estimate = estimate_noise_variance(phi, r, 1.0);
  CHECK(estimate == doctest::Approx(0.01).epsilon(0.15));
}

TEST_CASE("noise estimate requires enough samples") {
  CHECK_THROWS_AS(blbm_fit_features(random_matrix(4, 6, 1),
                                    random_matrix(4, 1, 2).col(0),
                                    BlbmConfig{}),
                  std::invalid_argument);
}

TEST_CASE("lower bound collapses to the mean when uncertainty vanishes") {
  Vector mean(3);
  mean << 1.0, -0.5, 2.0;
  const GaussianPosterior post = GaussianPosterior::diagonal(
      mean, Vector::Constant(3, 1e-18));
  Vector phi(3);
  phi << 0.2, 0.4, -1.0;
  const double bound = blbm_lower_bound(post, phi, 0.1);
  CHECK(bound == doctest::Approx(mean.dot(phi)).epsilon(1e-6));
}

TEST_CASE("lower bound matches the scalar chi-squared closed form") {
  const GaussianPosterior post =
      GaussianPosterior::dense(Vector::Zero(1), Matrix::Identity(1, 1));
  Vector phi(1);
  phi << 1.0;
  const double bound = blbm_lower_bound(post, phi, 0.10);
  CHECK(bound == doctest::Approx(-1.64486).epsilon(1e-5));
  CHECK(bound == doctest::Approx(-std::sqrt(2.70554)).epsilon(1e-5));
}

TEST_CASE("lower bound is the true ellipsoid minimum (brute force oracle)") {
  // Constrained Monte Carlo cannot beat the exact minimum, and comes close
  // in low dimension with a large draw.
  for (std::uint64_t seed : {101ULL, 102ULL}) {
    const int p = 2;
    const double alpha = 0.1;
    Rng rng(seed);
    Vector mean(p), phi(p);
    for (int j = 0; j < p; ++j) {
      mean(j) = rng.normal();
      phi(j) = rng.normal() + 0.5;
    }
    Matrix m = random_matrix(p, p, seed + 50);
    Matrix cov = m.transpose() * m + 0.5 * Matrix::Identity(p, p);
    const GaussianPosterior post = GaussianPosterior::dense(mean, cov);

    const double closed = blbm_lower_bound(post, phi, alpha);
    const double radius_sq = chi2_quantile(1.0 - alpha, p);

    Rng sample_rng(seed + 99);
    const int draws = 1000000;
    const Matrix samples = post.sample(draws, sample_rng);
    double mc_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < draws; ++i) {
      const Vector w = samples.row(i).transpose();
      if (post.mahalanobis_sq(w) > radius_sq) continue;
      mc_min = std::min(mc_min, w.dot(phi));
    }
    CHECK(closed <= mc_min);
    CHECK(std::fabs(mc_min - closed) <= 0.005 * std::fabs(closed));
  }
}

TEST_CASE("lower bound never exceeds the mean prediction") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int p = 4;
    Vector mean(p), phi(p);
    for (int j = 0; j < p; ++j) {
      mean(j) = rng.normal();
      phi(j) = rng.normal();
    }
    Matrix m = random_matrix(p, p, 200 + trial);
    const GaussianPosterior post = GaussianPosterior::dense(
        mean, Matrix(m.transpose() * m + 0.1 * Matrix::Identity(p, p)));
    const double bound = blbm_lower_bound(post, phi, 0.1);
    CHECK(bound <= mean.dot(phi) + 1e-12);
  }
}

TEST_CASE("lower bound is non-decreasing in alpha") {
  const GaussianPosterior post = GaussianPosterior::dense(
      Vector::Zero(3), Matrix(2.0 * Matrix::Identity(3, 3)));
  Vector phi(3);
  phi << 1.0, 0.5, -0.2;
  double prev = -std::numeric_limits<double>::infinity();
  for (double alpha : {0.01, 0.05, 0.1, 0.3, 0.6, 0.9}) {
    const double bound = blbm_lower_bound(post, phi, alpha);
    CHECK(bound >= prev);
    prev = bound;
  }
}

TEST_CASE("posterior contracts at the parametric rate") {
  // Realizable linear model: trace(Sigma) should scale like p / n.
  const int p = 6;
  const Vector w0 = random_matrix(p, 1, 31).col(0);
  std::vector<double> ns = {500, 1000, 2000, 4000, 8000};
  std::vector<double> traces;
  std::vector<double> errors;
  for (double nd : ns) {
    const int n = static_cast<int>(nd);
    const Matrix phi = random_matrix(n, p, 32);
    Rng rng(33);
    Vector r(n);
    for (int i = 0; i < n; ++i)
      r(i) = phi.row(i).dot(w0) + 0.1 * rng.normal();
    BlbmConfig config;
    config.noise_variance = 0.01;
    const GaussianPosterior post = blbm_fit_features(phi, r, config);
    traces.push_back(post.cov().trace());
    errors.push_back((post.mean() - w0).norm());
  }
  // Log-log slope of the trace against n.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double x = std::log(ns[i]), y = std::log(traces[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(ns.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-1.0).epsilon(0.2));
  CHECK(errors.back() < errors.front());
}

TEST_CASE("dense posterior construction validates SPD") {
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(GaussianPosterior::dense(Vector::Zero(2), bad),
                  FactorizationError);
  CHECK_THROWS_AS(
      GaussianPosterior::diagonal(Vector::Zero(2), Vector::Zero(2)),
      std::invalid_argument);
}
