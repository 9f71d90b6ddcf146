#include <doctest.h>

#include <cmath>

#include "pbl/baselines.hpp"
#include "pbl/evaluation.hpp"

using namespace pbl;

namespace {

Policy oracle_policy(const EnvSpec& spec) {
  Policy policy;
  policy.action_count = spec.action_count();
  policy.batch_scores = [spec](const Matrix& states) {
    return env_means(spec, states);
  };
  return policy;
}

Policy anti_oracle_policy(const EnvSpec& spec) {
  Policy policy;
  policy.action_count = spec.action_count();
  policy.batch_scores = [spec](const Matrix& states) {
    return Matrix(-env_means(spec, states));
  };
  return policy;
}

}  // namespace

TEST_CASE("the oracle policy has zero regret") {
  EnvSpec spec;
  spec.kind = EnvKind::kToy;
  CHECK(regret(oracle_policy(spec), spec, 5000, RandomSeed{3}) == 0.0);
}

TEST_CASE("the always-wrong policy pays the half-normal gap on the toy env") {
  EnvSpec spec;
  spec.kind = EnvKind::kToy;
  const double r =
      regret(anti_oracle_policy(spec), spec, 200000, RandomSeed{5});
  // 0.2 E|S1 + 2 S2| = 0.2 sqrt(10 / pi)
  CHECK(r == doctest::Approx(0.35682).epsilon(0.01));
}

TEST_CASE("a uniformly random policy pays half the always-wrong regret") {
  EnvSpec spec;
  spec.kind = EnvKind::kToy;
  Rng rng(7);
  const int mc = 200000;
  const Matrix states = sample_states(spec, mc, rng);
  const Matrix means = env_means(spec, states);
  double acc = 0.0;
  for (int i = 0; i < mc; ++i)
    acc += means.row(i).maxCoeff() - 0.5 * (means(i, 0) + means(i, 1));
  CHECK(acc / mc == doctest::Approx(0.17841).epsilon(0.01));
}

TEST_CASE("regret ignores the reward noise scale") {
  EnvSpec quiet, loud;
  quiet.kind = loud.kind = EnvKind::kSingleLinear;
  quiet.noise_sigma = 0.0;
  loud.noise_sigma = 1.0;
  const Policy policy = anti_oracle_policy(quiet);
  CHECK(regret(policy, quiet, 20000, RandomSeed{9}) ==
        regret(policy, loud, 20000, RandomSeed{9}));
}

TEST_CASE("two-stage regret of the oracle policy set is zero") {
  EnvSpec spec;
  spec.kind = EnvKind::kTwoStageLinear;
  spec.structural_seed = 5;
  const EnvOracle oracle(spec);

  StagePolicySet set;
  set.action_count = 2;
  Policy stage1;
  stage1.action_count = 2;
  stage1.batch_scores = [&spec](const Matrix& states) {
    const EnvOracle inner(spec);
    Matrix out(states.rows(), 2);
    for (Eigen::Index i = 0; i < states.rows(); ++i)
      for (int a = 0; a < 2; ++a)
        out(i, a) = inner.stage1_value(states.row(i).transpose(), a);
    return out;
  };
  Policy stage2;
  stage2.action_count = 2;
  stage2.batch_scores = [spec](const Matrix& histories) {
    // The terminal mean depends only on the trailing stage-2 state block.
    const int d2 = spec.state_dim(2);
    return env_means(spec, histories.rightCols(d2));
  };
  set.policies = {stage1, stage2};
  set.bounds.resize(2);
  set.history_dims = {2, 7};

  const double r = regret(set, spec, 2000, RandomSeed{11});
  CHECK(std::fabs(r) < 1e-12);
}

TEST_CASE("two-stage regret penalizes a wrong stage-2 rule") {
  EnvSpec spec;
  spec.kind = EnvKind::kTwoStageLinear;
  spec.structural_seed = 5;

  StagePolicySet set;
  set.action_count = 2;
  Policy stage1;
  stage1.action_count = 2;
  stage1.batch_scores = [](const Matrix& states) {
    Matrix out = Matrix::Zero(states.rows(), 2);
    out.col(0).setConstant(1.0);
    return out;
  };
  Policy stage2;
  stage2.action_count = 2;
  stage2.batch_scores = [spec](const Matrix& histories) {
    const int d2 = spec.state_dim(2);
    return Matrix(-env_means(spec, histories.rightCols(d2)));
  };
  set.policies = {stage1, stage2};
  set.bounds.resize(2);
  set.history_dims = {2, 7};

  const double r = regret(set, spec, 5000, RandomSeed{13});
  CHECK(r > 0.01);
}

TEST_CASE("importance sampling reproduces the mean reward on-policy") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  spec.epsilon = 1.0;  // deterministic behavior, propensity 1
  const Dataset data = gen_dataset(spec, 3000, RandomSeed{17});
  const double estimate = ope_importance_sampling(data, oracle_policy(spec));
  CHECK(estimate == doctest::Approx(data.rewards.mean()).epsilon(1e-12));
}

TEST_CASE("uniform behavior doubles matched rewards") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  spec.epsilon = 0.5;
  const Dataset data = gen_dataset(spec, 4000, RandomSeed{19});
  const Policy policy = oracle_policy(spec);
  const double estimate = ope_importance_sampling(data, policy);

  const IntVector chosen = policy.act_batch(data.states);
  double direct = 0.0;
  for (int i = 0; i < data.size(); ++i)
    if (chosen(i) == data.actions(i)) direct += 2.0 * data.rewards(i);
  CHECK(estimate == doctest::Approx(direct / data.size()).epsilon(1e-12));
}

TEST_CASE("importance sampling matches the oracle value at scale") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  spec.epsilon = 0.5;
  const int n = 100000;
  const Dataset data = gen_dataset(spec, n, RandomSeed{23});
  const Policy policy = oracle_policy(spec);
  const double estimate = ope_importance_sampling(data, policy);

  // Oracle value of the optimal policy.
  Rng rng(24);
  const Matrix states = sample_states(spec, 200000, rng);
  const double truth = env_means(spec, states).rowwise().maxCoeff().mean();

  // Standard error of the IS terms.
  const IntVector chosen = policy.act_batch(data.states);
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double term = chosen(i) == data.actions(i)
                            ? data.rewards(i) / data.propensities(i)
                            : 0.0;
    ss += (term - estimate) * (term - estimate);
  }
  const double se = std::sqrt(ss / (n - 1.0) / n);
  CHECK(std::fabs(estimate - truth) < 3.0 * se + 0.003);
}

TEST_CASE("importance sampling is unbiased over resamples") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  spec.epsilon = 0.6;
  const Policy policy = oracle_policy(spec);

  const int reps = 200, n = 2000;
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    const Dataset data =
        gen_dataset(spec, n, RandomSeed{derive_seed(900, {(std::uint64_t)r})});
    const double v = ope_importance_sampling(data, policy);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / reps;
  const double se =
      std::sqrt((sum_sq - reps * mean * mean) / (reps - 1.0) / reps);

  Rng rng(27);
  const Matrix states = sample_states(spec, 200000, rng);
  const double truth = env_means(spec, states).rowwise().maxCoeff().mean();
  CHECK(std::fabs(mean - truth) < 3.0 * (se + 0.002));
}

TEST_CASE("missing propensities are an explicit error") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  Dataset data = gen_dataset(spec, 100, RandomSeed{29});
  data.propensities.resize(0);
  CHECK_THROWS_AS(ope_importance_sampling(data, oracle_policy(spec)),
                  std::invalid_argument);
}

TEST_CASE("multi-stage weights multiply per-stage ratios") {
  TrajectoryDataset data;
  data.action_count = 2;
  data.states = {Matrix::Zero(2, 1), Matrix::Zero(2, 1)};
  data.actions = {IntVector(2), IntVector(2)};
  data.actions[0] << 1, 0;
  data.actions[1] << 1, 1;
  data.propensities = {Vector(2), Vector(2)};
  data.propensities[0] << 0.5, 0.25;
  data.propensities[1] << 0.5, 0.5;
  data.terminal_rewards.resize(2);
  data.terminal_rewards << 1.0, 2.0;

  StagePolicySet set;
  set.action_count = 2;
  Policy always_one;
  always_one.action_count = 2;
  always_one.batch_scores = [](const Matrix& states) {
    Matrix out = Matrix::Zero(states.rows(), 2);
    out.col(1).setConstant(1.0);
    return out;
  };
  set.policies = {always_one, always_one};
  set.bounds.resize(2);
  set.history_dims = {1, 4};

  // Trajectory 0 matches at both stages: weight 1/(0.5 * 0.5) = 4.
  // Trajectory 1 mismatches at stage 1: weight 0.
  const double v = ope_importance_sampling(data, set);
  CHECK(v == doctest::Approx((4.0 * 1.0 + 0.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("coverage diagnostic flags violations and honest bounds") {
  EnvSpec spec;
  spec.kind = EnvKind::kSingleLinear;
  spec.epsilon = 0.5;
  const Dataset data = gen_dataset(spec, 100000, RandomSeed{31});
  const FeatureMap map = make_identity_map(3, 2);
  GaussianPosterior post = blbm_fit(data, map, BlbmConfig{});
  auto model = std::make_shared<const LinearQModel>(map);

  // Well-specified fit on plenty of data: the bound sits under the truth.
  const LowerBoundFn lb(model, post, 0.1, 10000, RandomSeed{33});
  const CoverageResult good = coverage_diagnostic(lb, spec, 100,
                                                  RandomSeed{34});
  CHECK(good.worst_gap <= 1e-6);
  CHECK(good.covered == (good.worst_gap <= 0.0));

  // An ultra-pessimistic hand cache is covered trivially: signed basis
  // weights make the minimum at most -100 max_j |phi_j| at every input.
  Matrix low_cache(12, 6);
  low_cache.setZero();
  for (int j = 0; j < 6; ++j) {
    low_cache(2 * j, j) = 100.0;
    low_cache(2 * j + 1, j) = -100.0;
  }
  const LowerBoundFn ultra =
      LowerBoundFn::with_cache(model, post, 0.1, low_cache);
  const CoverageResult safe = coverage_diagnostic(ultra, spec, 100,
                                                  RandomSeed{34});
  CHECK(safe.covered);
  CHECK(safe.worst_gap < -1.0);

  // A singleton cache of huge weights overshoots the truth somewhere on
  // the grid.
  Matrix high_cache = 100.0 * Matrix::Ones(1, 6);
  const LowerBoundFn broken =
      LowerBoundFn::with_cache(model, post, 0.1, high_cache);
  const CoverageResult bad = coverage_diagnostic(broken, spec, 100,
                                                 RandomSeed{34});
  CHECK_FALSE(bad.covered);

  // Grid determinism.
  const CoverageResult again = coverage_diagnostic(lb, spec, 100,
                                                   RandomSeed{34});
  CHECK(again.worst_gap == good.worst_gap);
}

TEST_CASE("rate_check recovers constructed slopes exactly") {
  std::vector<double> ns = {500, 1000, 2000, 4000, 8000};
  std::vector<double> exact, flat;
  for (double n : ns) {
    exact.push_back(3.0 / std::sqrt(n));
    flat.push_back(0.42);
  }
  CHECK(rate_check(ns, exact).slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(rate_check(ns, flat).slope == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rate_check excludes nonpositive means and reports them") {
  std::vector<double> ns = {500, 1000, 2000, 4000};
  std::vector<double> regrets = {0.1, 0.0, 0.05, -0.01};
  const RateResult result = rate_check(ns, regrets);
  REQUIRE(result.excluded.size() == 2);
  CHECK(result.excluded[0] == 1);
  CHECK(result.excluded[1] == 3);
}
