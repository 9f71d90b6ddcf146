#include "pbl/evaluation.hpp"

#include <cmath>

namespace pbl {

namespace {
constexpr double kPropensityFloor = 0.01;
}

double RegretReport::mean() const {
  if (regrets.empty()) return 0.0;
  double sum = 0.0;
  for (double r : regrets) sum += r;
  return sum / static_cast<double>(regrets.size());
}

double RegretReport::std_error() const {
  const std::size_t n = regrets.size();
  if (n < 2) return 0.0;
  const double m = mean();
  double ss = 0.0;
  for (double r : regrets) ss += (r - m) * (r - m);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

double regret(const Policy& policy, const EnvSpec& spec, int mc_states,
              RandomSeed seed) {
  if (spec.stages() != 1)
    throw std::invalid_argument("regret: policy form requires a single-stage env");
  if (mc_states < 1)
    throw std::invalid_argument("regret: mc_states must be >= 1");
  Rng rng(seed);
  const Matrix states = sample_states(spec, mc_states, rng);
  const Matrix means = env_means(spec, states);
  const IntVector actions = policy.act_batch(states);
  double total = 0.0;
  for (int i = 0; i < mc_states; ++i)
    total += means.row(i).maxCoeff() - means(i, actions(i));
  return total / mc_states;
}

double regret(const StagePolicySet& set, const EnvSpec& spec, int mc_states,
              RandomSeed seed) {
  if (spec.stages() != 2)
    throw std::invalid_argument("regret: stage-set form requires a two-stage env");
  if (set.stages() != 2)
    throw std::invalid_argument("regret: policy set must have two stages");
  if (mc_states < 1)
    throw std::invalid_argument("regret: mc_states must be >= 1");

  const EnvOracle oracle(spec);
  const EnvStructure& st = oracle.structure();
  const int d1 = spec.state_dim(1);
  const int d2 = spec.state_dim(2);
  const int a_count = spec.action_count();

  Rng rng(seed);
  Matrix s1(mc_states, d1);
  for (int i = 0; i < mc_states; ++i)
    for (int j = 0; j < d1; ++j) s1(i, j) = rng.normal();
  Matrix noise(mc_states, d2);
  for (int i = 0; i < mc_states; ++i)
    for (int j = 0; j < d2; ++j) noise(i, j) = rng.normal();

  const IntVector a1_hat = set.policies[0].act_batch(s1);
  IntVector a1_star(mc_states);
  for (int i = 0; i < mc_states; ++i)
    a1_star(i) = oracle.optimal_stage1_action(s1.row(i).transpose());

  // Shared transition noise: identical first-stage choices give identical
  // second-stage states for the two policies.
  Matrix s2_hat(mc_states, d2), s2_star(mc_states, d2);
  for (int i = 0; i < mc_states; ++i) {
    const Vector base1 = s1.row(i).transpose();
    const Matrix& w_hat = a1_hat(i) == 0 ? st.w1 : st.w2;
    const Matrix& w_star = a1_star(i) == 0 ? st.w1 : st.w2;
    s2_hat.row(i) = (w_hat.transpose() * base1).transpose() + noise.row(i);
    s2_star.row(i) = (w_star.transpose() * base1).transpose() + noise.row(i);
  }

  Matrix h2(mc_states, d1 + a_count + d2);
  h2.setZero();
  h2.leftCols(d1) = s1;
  for (int i = 0; i < mc_states; ++i) h2(i, d1 + a1_hat(i)) = 1.0;
  h2.rightCols(d2) = s2_hat;
  const IntVector a2_hat = set.policies[1].act_batch(h2);

  const Matrix means_hat = env_means(spec, s2_hat);
  const Matrix means_star = env_means(spec, s2_star);
  double total = 0.0;
  for (int i = 0; i < mc_states; ++i)
    total += means_star.row(i).maxCoeff() - means_hat(i, a2_hat(i));
  return total / mc_states;
}

double ope_importance_sampling(const Dataset& data, const Policy& policy) {
  data.validate();
  if (!data.has_propensities())
    throw std::invalid_argument(
        "ope_importance_sampling: dataset has no propensities");
  const int n = data.size();
  const IntVector chosen = policy.act_batch(data.states);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (chosen(i) != data.actions(i)) continue;
    total += data.rewards(i) / std::max(data.propensities(i),
                                        kPropensityFloor);
  }
  return total / n;
}

double ope_importance_sampling(const TrajectoryDataset& data,
                               const StagePolicySet& set) {
  data.validate();
  if (!data.has_propensities())
    throw std::invalid_argument(
        "ope_importance_sampling: dataset has no propensities");
  if (set.stages() != data.stages())
    throw std::invalid_argument("ope_importance_sampling: stage mismatch");
  const int n = data.size();
  const int t_count = data.stages();

  Vector weights = Vector::Ones(n);
  for (int stage = 1; stage <= t_count; ++stage) {
    const Matrix histories = data.histories(stage);
    const IntVector chosen = set.policies[stage - 1].act_batch(histories);
    for (int i = 0; i < n; ++i) {
      if (chosen(i) != data.actions[stage - 1](i)) {
        weights(i) = 0.0;
      } else {
        weights(i) /= std::max(data.propensities[stage - 1](i),
                               kPropensityFloor);
      }
    }
  }
  return weights.dot(data.terminal_rewards) / n;
}

CoverageResult coverage_diagnostic(const LowerBoundFn& bound,
                                   const EnvSpec& spec, int grid_size,
                                   RandomSeed seed) {
  if (spec.stages() != 1)
    throw std::invalid_argument(
        "coverage_diagnostic: requires a single-stage env");
  if (grid_size < 1)
    throw std::invalid_argument("coverage_diagnostic: grid_size must be >= 1");
  Rng rng(seed);
  const Matrix states = sample_states(spec, grid_size, rng);
  const Matrix lower = bound.evaluate_batch(states);
  const Matrix truth = env_means(spec, states);
  CoverageResult result;
  result.worst_gap = (lower - truth).maxCoeff();
  result.covered = result.worst_gap <= 0.0;
  return result;
}

RateResult rate_check(const std::vector<double>& sample_sizes,
                      const std::vector<double>& mean_regrets) {
  if (sample_sizes.size() != mean_regrets.size())
    throw std::invalid_argument("rate_check: length mismatch");
  if (sample_sizes.size() < 4)
    throw std::invalid_argument("rate_check: need at least 4 sample sizes");

  RateResult result;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    if (!(mean_regrets[i] > 0.0)) {
      result.excluded.push_back(static_cast<int>(i));
      continue;
    }
    xs.push_back(std::log(sample_sizes[i]));
    ys.push_back(std::log(mean_regrets[i]));
  }
  if (xs.size() < 2)
    throw std::invalid_argument(
        "rate_check: fewer than 2 positive mean regrets");

  const double k = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  result.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  result.intercept = (sy - result.slope * sx) / k;
  return result;
}

}  // namespace pbl
