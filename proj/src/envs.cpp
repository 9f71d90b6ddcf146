#include "pbl/envs.hpp"

#include <cmath>

namespace pbl {

namespace {

// Nonlinear signal components; the second action scales the first by 1.2.
double nonlinear_f1(const Vector& s) {
  return (0.1 * std::exp(4.0 * s(0)) +
          4.0 / (1.0 + std::exp(-20.0 * (s(1) - 0.5))) + 3.0 * s(2) +
          2.0 * s(3) + s(4)) /
         2.5;
}

constexpr std::uint64_t kStructureStream = 0x5157;
constexpr std::uint64_t kOracleStream = 0x07AC;

}  // namespace

int EnvSpec::stages() const {
  switch (kind) {
    case EnvKind::kTwoStageLinear:
    case EnvKind::kTwoStageNonlinear:
      return 2;
    default:
      return 1;
  }
}

int EnvSpec::state_dim(int stage) const {
  switch (kind) {
    case EnvKind::kToy:
      return 2;
    case EnvKind::kSingleLinear:
      return 3;
    case EnvKind::kSingleNonlinear:
      return 5;
    case EnvKind::kTwoStageLinear:
      return stage == 1 ? 2 : 3;
    case EnvKind::kTwoStageNonlinear:
      return stage == 1 ? 2 : 5;
  }
  throw std::invalid_argument("EnvSpec: unknown kind");
}

void EnvSpec::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("EnvSpec: epsilon must be in [0,1]");
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("EnvSpec: noise_sigma must be >= 0");
}

EnvStructure env_structure(const EnvSpec& spec) {
  if (spec.stages() != 2)
    throw std::invalid_argument("env_structure: single-stage kind");
  const int d1 = spec.state_dim(1);
  const int d2 = spec.state_dim(2);
  Rng rng(derive_seed(spec.structural_seed, {kStructureStream}));
  EnvStructure st;
  st.w1.resize(d1, d2);
  for (int i = 0; i < d1; ++i)
    for (int j = 0; j < d2; ++j) st.w1(i, j) = rng.normal();
  st.w2 = st.w1.array() + 0.05;
  return st;
}

Matrix env_means(const EnvSpec& spec, const Matrix& states) {
  const int terminal_dim = spec.state_dim(spec.stages());
  if (states.cols() != terminal_dim)
    throw std::invalid_argument("env_means: state dimension mismatch");
  const Eigen::Index n = states.rows();
  Matrix means(n, 2);
  switch (spec.kind) {
    case EnvKind::kToy: {
      const Vector x = states.col(0) + 2.0 * states.col(1);
      means.col(0) = 1.0 * x;
      means.col(1) = 1.2 * x;
      break;
    }
    case EnvKind::kSingleLinear:
    case EnvKind::kTwoStageLinear: {
      means.col(0) =
          0.2 * states.col(0) + 0.25 * states.col(1) + 0.3 * states.col(2);
      means.col(1) =
          0.25 * states.col(0) + 0.3 * states.col(1) + 0.35 * states.col(2);
      break;
    }
    case EnvKind::kSingleNonlinear:
    case EnvKind::kTwoStageNonlinear: {
      const double input_scale =
          spec.kind == EnvKind::kTwoStageNonlinear ? 0.1 : 1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector s = states.row(i).transpose() * input_scale;
        const double f1 = nonlinear_f1(s);
        means(i, 0) = f1;
        means(i, 1) = 1.2 * f1;
      }
      break;
    }
  }
  return means;
}

double true_mean(const EnvSpec& spec, const Vector& state, int action) {
  if (action < 0 || action >= spec.action_count())
    throw std::invalid_argument("true_mean: action out of range");
  return env_means(spec, state.transpose())(0, action);
}

int optimal_action(const EnvSpec& spec, const Vector& state) {
  const Matrix means = env_means(spec, state.transpose());
  int best = 0;
  for (int a = 1; a < spec.action_count(); ++a)
    if (means(0, a) > means(0, best)) best = a;
  return best;
}

Matrix sample_states(const EnvSpec& spec, int count, Rng& rng) {
  const int d = spec.state_dim(1);
  Matrix states(count, d);
  const bool uniform = spec.kind == EnvKind::kSingleNonlinear;
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < d; ++j)
      states(i, j) = uniform ? rng.uniform() : rng.normal();
  return states;
}

Vector transition(const EnvSpec& spec, const EnvStructure& structure,
                  const Vector& s1, int action, Rng& rng) {
  if (spec.stages() != 2)
    throw std::invalid_argument("transition: single-stage kind");
  if (s1.size() != spec.state_dim(1))
    throw std::invalid_argument("transition: state dimension mismatch");
  const Matrix& w = action == 0 ? structure.w1 : structure.w2;
  Vector s2 = w.transpose() * s1;
  for (Eigen::Index j = 0; j < s2.size(); ++j) s2(j) += rng.normal();
  return s2;
}

double behavior_propensity(const EnvSpec& spec, int action, int optimal) {
  const double p_opt =
      spec.behavior == BehaviorConvention::kOptimalWithProbEpsilon
          ? spec.epsilon
          : 1.0 - spec.epsilon;
  if (action == optimal) return p_opt;
  return (1.0 - p_opt) / (spec.action_count() - 1);
}

namespace {

// Draws an action from the epsilon-greedy behavior policy.
int draw_behavior_action(const EnvSpec& spec, int optimal, Rng& rng) {
  const double p_opt =
      spec.behavior == BehaviorConvention::kOptimalWithProbEpsilon
          ? spec.epsilon
          : 1.0 - spec.epsilon;
  if (rng.uniform() < p_opt) return optimal;
  if (spec.action_count() == 2) return 1 - optimal;
  int pick = rng.uniform_int(spec.action_count() - 1);
  return pick < optimal ? pick : pick + 1;
}

}  // namespace

EnvOracle::EnvOracle(EnvSpec spec, int inner_budget)
    : EnvOracle(spec, env_structure(spec), inner_budget) {}

EnvOracle::EnvOracle(EnvSpec spec, EnvStructure structure, int inner_budget)
    : spec_(std::move(spec)), structure_(std::move(structure)) {
  if (spec_.stages() != 2)
    throw std::invalid_argument("EnvOracle: needs a two-stage kind");
  if (inner_budget < 1)
    throw std::invalid_argument("EnvOracle: inner_budget must be >= 1");
  const int d2 = spec_.state_dim(2);
  Rng rng(derive_seed(spec_.structural_seed, {kOracleStream}));
  inner_noise_.resize(inner_budget, d2);
  for (int i = 0; i < inner_budget; ++i)
    for (int j = 0; j < d2; ++j) inner_noise_(i, j) = rng.normal();
}

double EnvOracle::stage1_value(const Vector& s1, int action) const {
  if (s1.size() != spec_.state_dim(1))
    throw std::invalid_argument("stage1_value: state dimension mismatch");
  const Matrix& w = action == 0 ? structure_.w1 : structure_.w2;
  Matrix s2 = inner_noise_;
  s2.rowwise() += (w.transpose() * s1).transpose();
  return env_means(spec_, s2).rowwise().maxCoeff().mean();
}

int EnvOracle::optimal_stage1_action(const Vector& s1) const {
  int best = 0;
  double best_value = stage1_value(s1, 0);
  for (int a = 1; a < spec_.action_count(); ++a) {
    const double v = stage1_value(s1, a);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

Dataset gen_dataset(const EnvSpec& spec, int n, RandomSeed seed) {
  spec.validate();
  if (spec.stages() != 1)
    throw std::invalid_argument("gen_dataset: use gen_trajectories");
  if (n < 1) throw std::invalid_argument("gen_dataset: n must be >= 1");

  Rng rng(seed);
  Dataset data;
  data.action_count = spec.action_count();
  data.states.resize(n, spec.state_dim(1));
  data.actions.resize(n);
  data.rewards.resize(n);
  data.propensities.resize(n);
  const bool uniform = spec.kind == EnvKind::kSingleNonlinear;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < spec.state_dim(1); ++j)
      data.states(i, j) = uniform ? rng.uniform() : rng.normal();
    const Vector s = data.states.row(i).transpose();
    const int star = optimal_action(spec, s);
    const int a = draw_behavior_action(spec, star, rng);
    data.actions(i) = a;
    data.propensities(i) = behavior_propensity(spec, a, star);
    data.rewards(i) = true_mean(spec, s, a) + spec.noise_sigma * rng.normal();
  }
  return data;
}

TrajectoryDataset gen_trajectories(const EnvSpec& spec, int n,
                                   RandomSeed seed) {
  spec.validate();
  if (spec.stages() != 2)
    throw std::invalid_argument("gen_trajectories: use gen_dataset");
  if (n < 1) throw std::invalid_argument("gen_trajectories: n must be >= 1");

  const EnvOracle oracle(spec);
  const int d1 = spec.state_dim(1);
  const int d2 = spec.state_dim(2);
  Rng rng(seed);
  TrajectoryDataset data;
  data.action_count = spec.action_count();
  data.states = {Matrix(n, d1), Matrix(n, d2)};
  data.actions = {IntVector(n), IntVector(n)};
  data.propensities = {Vector(n), Vector(n)};
  data.terminal_rewards.resize(n);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d1; ++j) data.states[0](i, j) = rng.normal();
    const Vector s1 = data.states[0].row(i).transpose();
    const int star1 = oracle.optimal_stage1_action(s1);
    const int a1 = draw_behavior_action(spec, star1, rng);
    data.actions[0](i) = a1;
    data.propensities[0](i) = behavior_propensity(spec, a1, star1);

    const Vector s2 = transition(spec, oracle.structure(), s1, a1, rng);
    data.states[1].row(i) = s2.transpose();
    const int star2 = optimal_action(spec, s2);
    const int a2 = draw_behavior_action(spec, star2, rng);
    data.actions[1](i) = a2;
    data.propensities[1](i) = behavior_propensity(spec, a2, star2);
    data.terminal_rewards(i) =
        true_mean(spec, s2, a2) + spec.noise_sigma * rng.normal();
  }
  return data;
}

OracleValue two_stage_oracle_value(const EnvSpec& spec, int mc_budget,
                                   RandomSeed seed) {
  spec.validate();
  if (spec.stages() != 2)
    throw std::invalid_argument("two_stage_oracle_value: single-stage kind");
  if (mc_budget < 2)
    throw std::invalid_argument("two_stage_oracle_value: budget too small");

  const EnvStructure structure = env_structure(spec);
  const int d1 = spec.state_dim(1);
  const int d2 = spec.state_dim(2);
  Rng rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  Vector s1(d1);
  Matrix inner(mc_budget, d2);
  for (int outer = 0; outer < mc_budget; ++outer) {
    for (int j = 0; j < d1; ++j) s1(j) = rng.normal();
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < spec.action_count(); ++a) {
      const Matrix& w = a == 0 ? structure.w1 : structure.w2;
      for (int m = 0; m < mc_budget; ++m)
        for (int j = 0; j < d2; ++j) inner(m, j) = rng.normal();
      inner.rowwise() += (w.transpose() * s1).transpose();
      const double g = env_means(spec, inner).rowwise().maxCoeff().mean();
      best = std::max(best, g);
    }
    sum += best;
    sum_sq += best * best;
  }
  OracleValue out;
  out.value = sum / mc_budget;
  const double var =
      (sum_sq - mc_budget * out.value * out.value) / (mc_budget - 1);
  out.std_error = std::sqrt(std::max(0.0, var) / mc_budget);
  return out;
}

}  // namespace pbl
