#pragma once

#include "pbl/dataset.hpp"
#include "pbl/numerics.hpp"

namespace pbl {

enum class EnvKind {
  kToy,
  kSingleLinear,
  kSingleNonlinear,
  kTwoStageLinear,
  kTwoStageNonlinear,
};

/// How the epsilon-greedy behavior policy mixes the optimal action with
/// exploration. The default takes the optimal action with probability
/// epsilon, so large epsilon leaves sub-optimal actions barely explored;
/// the alternative flips that to probability 1 - epsilon.
enum class BehaviorConvention {
  kOptimalWithProbEpsilon,
  kOptimalWithProbOneMinusEpsilon,
};

struct EnvSpec {
  EnvKind kind = EnvKind::kSingleLinear;
  double noise_sigma = 0.1;
  double epsilon = 0.5;
  std::uint64_t structural_seed = 1;  // fixes the transition matrices
  BehaviorConvention behavior = BehaviorConvention::kOptimalWithProbEpsilon;

  int stages() const;
  int action_count() const { return 2; }
  int state_dim(int stage = 1) const;
  void validate() const;
};

/// Transition coefficients for the two-stage kinds: W2 = W1 + 0.05
/// elementwise, entries of W1 drawn N(0,1) from the structural seed.
struct EnvStructure {
  Matrix w1;  // d1 x d2
  Matrix w2;
};

EnvStructure env_structure(const EnvSpec& spec);

/// Noise-free conditional mean reward for every action, over rows of
/// `states`. For the two-stage kinds the rows are terminal-stage states.
Matrix env_means(const EnvSpec& spec, const Matrix& states);

/// Exact formula evaluation of the mean reward; no noise. For two-stage
/// kinds `state` is the terminal-stage state.
double true_mean(const EnvSpec& spec, const Vector& state, int action);

/// argmax of true_mean over actions, ties to the lowest index.
int optimal_action(const EnvSpec& spec, const Vector& state);

/// Stage-1 state draw (N(0,1) entries, or U[0,1] for the single-stage
/// nonlinear kind).
Matrix sample_states(const EnvSpec& spec, int count, Rng& rng);

/// s2 = W_a^T s1 + z with z standard normal.
Vector transition(const EnvSpec& spec, const EnvStructure& structure,
                  const Vector& s1, int action, Rng& rng);

/// Oracle access to the two-stage optimal continuation. The inner noise set
/// used for the nested expectation is drawn once per structural seed, so
/// stage-1 values and optimal actions are pure functions of the spec.
class EnvOracle {
 public:
  explicit EnvOracle(EnvSpec spec, int inner_budget = 1000);

  /// Diagnostic variant with explicit transition coefficients.
  EnvOracle(EnvSpec spec, EnvStructure structure, int inner_budget);

  const EnvSpec& spec() const { return spec_; }
  const EnvStructure& structure() const { return structure_; }

  /// E[max_a2 mean(s2, a2) | s1, a1] over the cached inner noise.
  double stage1_value(const Vector& s1, int action) const;
  int optimal_stage1_action(const Vector& s1) const;

 private:
  EnvSpec spec_;
  EnvStructure structure_;
  Matrix inner_noise_;  // inner_budget x d2
};

/// Single-stage generation: behavior plays the oracle-optimal action with
/// the convention-dependent probability, rewards are mean + sigma * z, and
/// the exact propensity of the logged action is stored.
Dataset gen_dataset(const EnvSpec& spec, int n, RandomSeed seed);

/// Two-stage generation with the same behavior convention at both stages;
/// stage-1 optimal actions come from the nested-expectation oracle.
TrajectoryDataset gen_trajectories(const EnvSpec& spec, int n,
                                   RandomSeed seed);

/// V(pi*) for two-stage kinds by nested Monte Carlo: `mc_budget` outer
/// draws of s1 and per-action inner draws of s2, exact stage-2 maxima.
/// Returns the estimate and its standard error.
struct OracleValue {
  double value = 0.0;
  double std_error = 0.0;
};
OracleValue two_stage_oracle_value(const EnvSpec& spec, int mc_budget,
                                   RandomSeed seed);

/// Probability the behavior policy assigns to `action` at a state whose
/// optimal action is `optimal`.
double behavior_propensity(const EnvSpec& spec, int action, int optimal);

}  // namespace pbl
