#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pbl/blbm.hpp"
#include "pbl/bnn.hpp"
#include "pbl/dataset.hpp"
#include "pbl/pessimism.hpp"

namespace pbl {

enum class ModelFamily { kBlbm, kBnn };

/// Construction recipe for per-stage feature maps (BLBM stages). The map
/// for stage t uses derive_seed(seed, {t}), so stages get independent
/// frequencies while a fixed seed reproduces the whole set.
struct BasisConfig {
  BasisKind kind = BasisKind::kRff;
  int num_features = 100;
  double bandwidth = 1.0;
  std::uint64_t seed = 0;
};

FeatureMap make_stage_map(const BasisConfig& basis, int input_dim,
                          int action_count, int stage);

struct DtrConfig {
  bool pessimistic = true;  // false: plain posterior-mean Q-learning
  int num_posterior_samples = 10000;
  std::uint64_t seed = 0;
  // Cross-fitting: trajectories are split into T folds and stage K is
  // fitted on fold K only (pseudo-rewards are still computed everywhere).
  bool cross_fit = false;
  BasisConfig basis;             // BLBM stages
  BlbmConfig blbm;               // BLBM stages
  std::vector<int> hidden = {16, 16};  // BNN stages
  BnnTrainConfig bnn;            // BNN stages (seed field is ignored)
};

/// Per-stage lower bound evaluated on flattened histories.
struct StageBound {
  std::function<Matrix(const Matrix&)> batch;  // (n x h_dim) -> (n x |A|)
  int action_count = 0;
};

struct StagePolicySet {
  std::vector<StageBound> bounds;   // stage t at index t-1
  std::vector<Policy> policies;
  std::vector<double> stage_alphas;
  std::vector<int> history_dims;
  int action_count = 0;

  int stages() const { return static_cast<int>(policies.size()); }
};

/// Backward induction over the T stages: stage K is fitted on
/// (h_i^(K), a_i^(K), r_i^(K)) at level alpha / T, and the pseudo-reward
/// for stage K-1 is max_a of the fitted stage-K lower bound at each
/// trajectory. Exactly T fits are performed; the notional stage-(T+1)
/// bound is the zero function.
StagePolicySet backward_induct(const TrajectoryDataset& data,
                               ModelFamily family, double alpha,
                               const DtrConfig& config);

/// Applies the stage policy matching the prefix length: `states` holds
/// (s1..st) and `actions` holds (a1..a_{t-1}).
int run_stage_policy(const StagePolicySet& set,
                     const std::vector<Vector>& states,
                     const std::vector<int>& actions);

/// Closed-form uniform lower bound for a linear-basis posterior, batched
/// over states; pass alpha <= 0 to get the plain posterior-mean predictor.
std::function<Matrix(const Matrix&)> blbm_bound_batch(
    GaussianPosterior post, FeatureMap map, double alpha);

}  // namespace pbl
