#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace pbl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// Thrown when a symmetric factorization hits a non-positive pivot.
/// Carries the index of the failing pivot.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(int pivot, double value)
      : std::runtime_error("Cholesky factorization failed at pivot " +
                           std::to_string(pivot) + " (value " +
                           std::to_string(value) + " <= 0)"),
        pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

struct RandomSeed {
  std::uint64_t value = 0;
};

// SplitMix64 finalizer; also the basis for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Combines a base seed with a list of indices into a new seed. Distinct
// index tuples map to distinct streams (up to 64-bit hash collisions).
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> parts);

/// Deterministic splittable generator (SplitMix64 stream). The state is a
/// counter advanced by a fixed odd constant; output is a bijective hash of
/// the counter, so child streams derived via `child` are independent of the
/// parent stream position.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  explicit Rng(RandomSeed seed) : state_(seed.value) {}

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  /// Standard normal via the Marsaglia polar method (pairs are cached).
  double normal();

  /// Independent child stream keyed by `key`.
  Rng child(std::uint64_t key) const;

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Natural log of the gamma function (Lanczos approximation), x > 0.
double log_gamma(double x);

// Regularized lower incomplete gamma P(a, x) for a > 0, x >= 0.
double reg_lower_inc_gamma(double a, double x);

/// Quantile of the chi-squared distribution with `df` degrees of freedom:
/// returns x such that P(df/2, x/2) = prob, solved by bisection to ~1e-12
/// relative. Throws std::invalid_argument outside the domain.
double chi2_quantile(double prob, int df);

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Symmetry is checked to 1e-10 relative in the max norm; a non-positive
/// pivot raises FactorizationError with the pivot index.
Matrix cholesky(const Matrix& a);

/// Pseudo-factorization for positive semi-definite input: columns whose
/// pivot falls below tol * max(diag) are zeroed instead of failing, so a
/// degenerate covariance yields L with L * L^T = A on its range.
Matrix cholesky_psd(const Matrix& a, double tol = 1e-12);

// Solve (L L^T) x = b given the lower factor L.
Vector chol_solve(const Matrix& chol_lower, const Vector& b);

// Inverse of (L L^T) given the lower factor L.
Matrix chol_inverse(const Matrix& chol_lower);

/// Draws `count` rows from N(mean, cov). Each row is mean + L z with z
/// i.i.d. standard normal, consumed row-major so a longer draw extends a
/// shorter one with the same seed. With allow_degenerate the covariance may
/// be singular (handled via cholesky_psd); otherwise it must be SPD.
Matrix mvn_sample(const Vector& mean, const Matrix& cov, int count, Rng& rng,
                  bool allow_degenerate = false);
Matrix mvn_sample(const Vector& mean, const Matrix& cov, int count,
                  RandomSeed seed, bool allow_degenerate = false);

}  // namespace pbl
