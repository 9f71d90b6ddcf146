#include "pbl/numerics.hpp"

#include <cmath>
#include <limits>

namespace pbl {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(base + kGolden);
  for (std::uint64_t p : parts) {
    h = mix64(h ^ (p + kGolden));
  }
  return h;
}

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int requires n > 0");
  return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                           static_cast<unsigned __int128>(n)) >>
                          64);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  cached_ = v * f;
  has_cached_ = true;
  return u * f;
}

Rng Rng::child(std::uint64_t key) const {
  return Rng(derive_seed(state_, {key}));
}

double log_gamma(double x) {
  // Lanczos, g = 7, n = 9.
  static const double coef[9] = {
      0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
      771.32342877765313,   -176.61502916214059, 12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x <= 0.0) throw std::invalid_argument("log_gamma requires x > 0");
  double sum = coef[0];
  for (int i = 1; i < 9; ++i) sum += coef[i] / (x - 1.0 + i);
  const double t = x + 6.5;
  return 0.5 * std::log(2.0 * M_PI) + (x - 0.5) * std::log(t) - t +
         std::log(sum);
}

namespace {

// Series expansion, converges fast for x < a + 1.
double gamma_series(double a, double x) {
  const double eps = std::numeric_limits<double>::epsilon();
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * eps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Continued fraction for Q(a, x), converges fast for x >= a + 1.
double gamma_cont_frac(double a, double x) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double fpmin = std::numeric_limits<double>::min() / eps;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= eps) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

}  // namespace

double reg_lower_inc_gamma(double a, double x) {
  if (a <= 0.0 || x < 0.0)
    throw std::invalid_argument("reg_lower_inc_gamma requires a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_cont_frac(a, x);
}

double chi2_quantile(double prob, int df) {
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("chi2_quantile requires prob in (0,1)");
  if (df < 1) throw std::invalid_argument("chi2_quantile requires df >= 1");
  const double a = 0.5 * df;

  // Bracket the root, then bisect. P(a, x/2) is strictly increasing in x.
  double lo = 0.0;
  double hi = df + 10.0 * std::sqrt(2.0 * df) + 10.0;
  while (reg_lower_inc_gamma(a, 0.5 * hi) < prob) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw std::runtime_error("chi2_quantile failed to bracket");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (reg_lower_inc_gamma(a, 0.5 * mid) < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-14 * std::max(1.0, lo)) break;
  }
  return 0.5 * (lo + hi);
}

namespace {

void check_symmetric(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("cholesky requires a square matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale)
    throw std::invalid_argument("cholesky requires a symmetric matrix");
}

Matrix cholesky_impl(const Matrix& a, bool psd, double tol) {
  const Eigen::Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  const double pivot_floor =
      psd ? tol * std::max(1.0, a.diagonal().maxCoeff()) : 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (d <= pivot_floor) {
      if (!psd) throw FactorizationError(static_cast<int>(j), d);
      l.col(j).setZero();
      continue;
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) =
          (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return l;
}

}  // namespace

Matrix cholesky(const Matrix& a) {
  check_symmetric(a);
  return cholesky_impl(a, false, 0.0);
}

Matrix cholesky_psd(const Matrix& a, double tol) {
  check_symmetric(a);
  return cholesky_impl(a, true, tol);
}

Vector chol_solve(const Matrix& chol_lower, const Vector& b) {
  if (chol_lower.rows() != b.size())
    throw std::invalid_argument("chol_solve: dimension mismatch");
  Vector y = chol_lower.triangularView<Eigen::Lower>().solve(b);
  return chol_lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix chol_inverse(const Matrix& chol_lower) {
  const Eigen::Index n = chol_lower.rows();
  Matrix inv = chol_lower.triangularView<Eigen::Lower>().solve(
      Matrix::Identity(n, n));
  return chol_lower.transpose().triangularView<Eigen::Upper>().solve(inv);
}

Matrix mvn_sample(const Vector& mean, const Matrix& cov, int count, Rng& rng,
                  bool allow_degenerate) {
  if (mean.size() != cov.rows())
    throw std::invalid_argument("mvn_sample: mean/cov dimension mismatch");
  if (count < 1) throw std::invalid_argument("mvn_sample: count must be >= 1");
  const Matrix l = allow_degenerate ? cholesky_psd(cov) : cholesky(cov);
  const Eigen::Index dim = mean.size();
  Matrix out(count, dim);
  Vector z(dim);
  for (int i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) z(j) = rng.normal();
    out.row(i) = (mean + l * z).transpose();
  }
  return out;
}

Matrix mvn_sample(const Vector& mean, const Matrix& cov, int count,
                  RandomSeed seed, bool allow_degenerate) {
  Rng rng(seed);
  return mvn_sample(mean, cov, count, rng, allow_degenerate);
}

}  // namespace pbl
