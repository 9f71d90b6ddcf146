#include <doctest.h>

#include <cmath>

#include "pbl/dtr.hpp"
#include "pbl/envs.hpp"

using namespace pbl;

namespace {

// Noise-free two-stage data with exactly linear stage-2 rewards, so a
// linear-basis fit interpolates and the pseudo-rewards can be checked by
// hand against the stagewise maxima.
TrajectoryDataset linear_two_stage_data(int n, std::uint64_t seed) {
  Rng rng(seed);
  TrajectoryDataset data;
  data.action_count = 2;
  data.states = {Matrix(n, 1), Matrix(n, 1)};
  data.actions = {IntVector(n), IntVector(n)};
  data.terminal_rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    data.states[0](i, 0) = rng.normal();
    data.actions[0](i) = rng.uniform_int(2);
    data.states[1](i, 0) = rng.normal();
    data.actions[1](i) = rng.uniform_int(2);
    // reward = 1.0 * s2 under action 0, -2.0 * s2 under action 1
    const double s2 = data.states[1](i, 0);
    data.terminal_rewards(i) = data.actions[1](i) == 0 ? s2 : -2.0 * s2;
  }
  return data;
}

DtrConfig blbm_config() {
  DtrConfig config;
  config.basis.kind = BasisKind::kIdentity;
  config.blbm.noise_variance = 1e-8;
  config.blbm.prior_variance = 1e6;
  config.seed = 17;
  return config;
}

}  // namespace

TEST_CASE("single-stage backward induction reduces to the flat algorithm") {
  Rng rng(3);
  const int n = 300;
  TrajectoryDataset traj;
  traj.action_count = 2;
  traj.states = {Matrix(n, 2)};
  traj.actions = {IntVector(n)};
  traj.terminal_rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    traj.states[0](i, 0) = rng.normal();
    traj.states[0](i, 1) = rng.normal();
    traj.actions[0](i) = rng.uniform_int(2);
    traj.terminal_rewards(i) = traj.states[0](i, 0) + 0.1 * rng.normal();
  }
  DtrConfig config = blbm_config();
  config.blbm = BlbmConfig{};
  config.blbm.noise_variance = 0.01;
  const double alpha = 0.1;
  const StagePolicySet set =
      backward_induct(traj, ModelFamily::kBlbm, alpha, config);
  REQUIRE(set.stages() == 1);
  CHECK(set.stage_alphas[0] == alpha);

  // The flat path: fit on the same rows with the same stage map.
  Dataset flat;
  flat.action_count = 2;
  flat.states = traj.states[0];
  flat.actions = traj.actions[0];
  flat.rewards = traj.terminal_rewards;
  const FeatureMap map = make_stage_map(config.basis, 2, 2, 1);
  GaussianPosterior post = blbm_fit(flat, map, config.blbm);
  auto direct = blbm_bound_batch(std::move(post), map, alpha);

  Matrix grid(50, 2);
  Rng grid_rng(9);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 2; ++j) grid(i, j) = grid_rng.normal();
  CHECK((set.bounds[0].batch(grid) - direct(grid)).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("pseudo-rewards equal stagewise maxima of the stage-2 fit") {
  const TrajectoryDataset data = linear_two_stage_data(200, 5);
  DtrConfig config = blbm_config();
  const StagePolicySet set =
      backward_induct(data, ModelFamily::kBlbm, 0.1, config);
  REQUIRE(set.stages() == 2);

  // With an interpolating fit and near-zero posterior variance the stage-2
  // bound is the true reward surface, so the pseudo-reward at trajectory i
  // is max(s2, -2 s2) computed by hand.
  const Matrix h2 = data.histories(2);
  const Matrix bound2 = set.bounds[1].batch(h2);
  for (int i = 0; i < data.size(); ++i) {
    const double s2 = data.states[1](i, 0);
    const double hand = std::max(s2, -2.0 * s2);
    CHECK(bound2.row(i).maxCoeff() == doctest::Approx(hand).epsilon(1e-2));
  }
}

TEST_CASE("full-batch backward induction is invariant to trajectory order") {
  const TrajectoryDataset data = linear_two_stage_data(120, 7);
  DtrConfig config = blbm_config();
  const StagePolicySet forward =
      backward_induct(data, ModelFamily::kBlbm, 0.2, config);

  // Reverse the trajectory order.
  TrajectoryDataset reversed = data;
  const int n = data.size();
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < 2; ++t) {
      reversed.states[t].row(i) = data.states[t].row(n - 1 - i);
      reversed.actions[t](i) = data.actions[t](n - 1 - i);
    }
    reversed.terminal_rewards(i) = data.terminal_rewards(n - 1 - i);
  }
  const StagePolicySet backward =
      backward_induct(reversed, ModelFamily::kBlbm, 0.2, config);

  Matrix grid(40, 1);
  Rng rng(11);
  for (int i = 0; i < 40; ++i) grid(i, 0) = rng.normal();
  CHECK((forward.bounds[0].batch(grid) - backward.bounds[0].batch(grid))
            .cwiseAbs()
            .maxCoeff() < 1e-9);
}

TEST_CASE("pessimistic pseudo-rewards never exceed the mean-fit ones") {
  const TrajectoryDataset data = linear_two_stage_data(150, 13);
  DtrConfig config = blbm_config();
  config.blbm.noise_variance = 0.5;  // leave real posterior uncertainty
  config.blbm.prior_variance = 1.0;

  const StagePolicySet pessimistic =
      backward_induct(data, ModelFamily::kBlbm, 0.1, config);
  DtrConfig mean_config = config;
  mean_config.pessimistic = false;
  const StagePolicySet mean_fit =
      backward_induct(data, ModelFamily::kBlbm, 0.1, mean_config);

  const Matrix h2 = data.histories(2);
  const Vector pessi_pseudo =
      pessimistic.bounds[1].batch(h2).rowwise().maxCoeff();
  const Vector mean_pseudo = mean_fit.bounds[1].batch(h2).rowwise().maxCoeff();
  for (int i = 0; i < data.size(); ++i)
    CHECK(pessi_pseudo(i) <= mean_pseudo(i) + 1e-12);
}

TEST_CASE("stage accounting: exactly T stages at alpha over T") {
  const TrajectoryDataset data = linear_two_stage_data(100, 19);
  DtrConfig config = blbm_config();
  const double alpha = 0.3;
  const StagePolicySet set =
      backward_induct(data, ModelFamily::kBlbm, alpha, config);
  CHECK(set.stages() == 2);
  CHECK(set.bounds.size() == 2);
  for (double a : set.stage_alphas)
    CHECK(a == doctest::Approx(alpha / 2).epsilon(1e-15));
}

TEST_CASE("run_stage_policy validates prefixes and applies the right stage") {
  const TrajectoryDataset data = linear_two_stage_data(150, 23);
  DtrConfig config = blbm_config();
  const StagePolicySet set =
      backward_induct(data, ModelFamily::kBlbm, 0.1, config);

  Vector s1(1), s2(1);
  s1 << 0.4;
  s2 << -0.8;
  const int a1 = run_stage_policy(set, {s1}, {});
  CHECK(a1 == set.policies[0].act(s1));
  const int a2 = run_stage_policy(set, {s1, s2}, {a1});
  const Vector h2 = flatten_history({s1, s2}, {a1}, 2);
  CHECK(a2 == set.policies[1].act(h2));

  CHECK_THROWS_AS(run_stage_policy(set, {s1, s2, s2}, {0, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_stage_policy(set, {}, {}), std::invalid_argument);
}

TEST_CASE("a dominant stage-2 action wins for every history") {
  StagePolicySet set;
  set.action_count = 2;
  StageBound bound;
  bound.action_count = 2;
  bound.batch = [](const Matrix& states) {
    Matrix out(states.rows(), 2);
    out.col(0).setConstant(0.0);
    out.col(1).setConstant(1.0);
    return out;
  };
  set.bounds = {bound, bound};
  Policy policy;
  policy.action_count = 2;
  policy.batch_scores = bound.batch;
  set.policies = {policy, policy};
  set.stage_alphas = {0.05, 0.05};
  set.history_dims = {1, 4};

  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    Vector s1(1), s2(1);
    s1 << rng.normal();
    s2 << rng.normal();
    CHECK(run_stage_policy(set, {s1, s2}, {0}) == 1);
  }
}

TEST_CASE("cross-fitting splits trajectories across stages") {
  const TrajectoryDataset data = linear_two_stage_data(200, 31);
  DtrConfig config = blbm_config();
  config.cross_fit = true;
  const StagePolicySet set =
      backward_induct(data, ModelFamily::kBlbm, 0.1, config);
  CHECK(set.stages() == 2);
  // Folded fits still interpolate the noise-free linear surface.
  const Matrix h2 = data.histories(2);
  const Matrix bound2 = set.bounds[1].batch(h2);
  for (int i = 0; i < data.size(); ++i) {
    const double s2 = data.states[1](i, 0);
    CHECK(bound2.row(i).maxCoeff() ==
          doctest::Approx(std::max(s2, -2.0 * s2)).epsilon(0.05));
  }
}

TEST_CASE("bnn backward induction recovers the stage-2 oracle rule") {
  EnvSpec spec;
  spec.kind = EnvKind::kTwoStageNonlinear;
  spec.epsilon = 0.75;
  spec.structural_seed = 3;
  const TrajectoryDataset data = gen_trajectories(spec, 5000, RandomSeed{41});

  DtrConfig config;
  config.seed = 43;
  config.bnn.learning_rate = 4e-5;  // step scaled down with the larger n
  const StagePolicySet set =
      backward_induct(data, ModelFamily::kBnn, 0.1, config);

  // Agreement of the stage-2 policy with the exact oracle on fresh
  // histories drawn from the environment.
  const TrajectoryDataset fresh = gen_trajectories(spec, 500, RandomSeed{47});
  const Matrix h2 = fresh.histories(2);
  const IntVector actions = set.policies[1].act_batch(h2);
  int agree = 0;
  for (int i = 0; i < 500; ++i) {
    const int star =
        optimal_action(spec, fresh.states[1].row(i).transpose());
    agree += actions(i) == star;
  }
  CHECK(agree >= 450);
}
