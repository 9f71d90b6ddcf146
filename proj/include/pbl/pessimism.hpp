#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pbl/blbm.hpp"
#include "pbl/qmodel.hpp"

namespace pbl {

/// Indices j with (w_j - mean)^T Sigma^{-1} (w_j - mean) <=
/// chi2_quantile(1 - alpha, p); the boundary is inclusive. Quadratic forms
/// are computed through triangular solves, never an explicit inverse.
std::vector<int> credible_filter(const Matrix& samples,
                                 const GaussianPosterior& post, double alpha);

/// The sampling-based uniform lower bound: N posterior draws are filtered
/// through the credible ellipsoid once at construction, and every
/// evaluation takes the minimum of f(s, a, w_j) over that one accepted set.
/// Sharing the accepted set across all (s, a) is what makes the bound
/// uniform. If the filter accepts nothing the cache falls back to the
/// posterior mean, which is always feasible.
class LowerBoundFn {
 public:
  LowerBoundFn(std::shared_ptr<const QModel> model, GaussianPosterior post,
               double alpha, int num_samples, RandomSeed seed);

  /// Builds a bound around an explicit accepted-weight cache (rows). Used
  /// for hand-constructed caches in diagnostics.
  static LowerBoundFn with_cache(std::shared_ptr<const QModel> model,
                                 GaussianPosterior post, double alpha,
                                 Matrix accepted);

  double evaluate(const Vector& s, int a) const;
  Vector evaluate_all(const Vector& s) const;
  Matrix evaluate_batch(const Matrix& states) const;

  const QModel& model() const { return *model_; }
  std::shared_ptr<const QModel> model_ptr() const { return model_; }
  const GaussianPosterior& posterior() const { return posterior_; }
  double alpha() const { return alpha_; }
  int num_samples() const { return num_samples_; }
  std::uint64_t seed() const { return seed_; }
  const Matrix& accepted() const { return accepted_; }
  bool used_center_fallback() const { return fallback_; }

 private:
  LowerBoundFn() = default;
  std::shared_ptr<const QModel> model_;
  GaussianPosterior posterior_;
  double alpha_ = 0.0;
  int num_samples_ = 0;
  std::uint64_t seed_ = 0;
  Matrix accepted_;
  bool fallback_ = false;
};

LowerBoundFn build_lower_bound(std::shared_ptr<const QModel> model,
                               GaussianPosterior post, double alpha,
                               int num_samples, RandomSeed seed);

/// Deterministic rule: argmax over actions of an attached per-action score,
/// ties resolved to the lowest action index.
struct Policy {
  int action_count = 0;
  std::function<Matrix(const Matrix&)> batch_scores;  // (n x d) -> (n x |A|)

  int act(const Vector& s) const;
  IntVector act_batch(const Matrix& states) const;
  Vector scores(const Vector& s) const;
};

int argmax_lowest_tie(const Vector& scores);

Policy greedy_policy(std::shared_ptr<const LowerBoundFn> bound);
Policy greedy_policy(const LowerBoundFn& bound);  // copies the bound

}  // namespace pbl
