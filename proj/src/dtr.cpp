#include "pbl/dtr.hpp"

#include <cmath>

namespace pbl {

FeatureMap make_stage_map(const BasisConfig& basis, int input_dim,
                          int action_count, int stage) {
  if (basis.kind == BasisKind::kIdentity)
    return make_identity_map(input_dim, action_count);
  return make_feature_map(input_dim, basis.num_features, basis.bandwidth,
                          action_count,
                          RandomSeed{derive_seed(basis.seed, {static_cast<std::uint64_t>(stage)})});
}

std::function<Matrix(const Matrix&)> blbm_bound_batch(GaussianPosterior post,
                                                      FeatureMap map,
                                                      double alpha) {
  if (post.dim() != map.joint_dim())
    throw std::invalid_argument("blbm_bound_batch: posterior/map mismatch");
  const double radius =
      alpha > 0.0 ? std::sqrt(chi2_quantile(1.0 - alpha, post.dim())) : 0.0;
  auto shared_post = std::make_shared<const GaussianPosterior>(std::move(post));
  auto shared_map = std::make_shared<const FeatureMap>(std::move(map));
  return [shared_post, shared_map, radius](const Matrix& states) {
    const FeatureMap& m = *shared_map;
    const GaussianPosterior& p = *shared_post;
    const Matrix phi = encode_states(m, states);
    Matrix out(states.rows(), m.action_count);
    for (int a = 0; a < m.action_count; ++a) {
      const Eigen::Index lo = static_cast<Eigen::Index>(a) * m.num_features;
      out.col(a) = phi * p.mean().segment(lo, m.num_features);
      if (radius > 0.0) {
        // phi(s,a)^T Sigma phi(s,a) touches only the (a,a) diagonal block.
        Vector var(states.rows());
        if (p.is_diagonal()) {
          var = phi.array().square().matrix() *
                p.var_diag().segment(lo, m.num_features);
        } else {
          const auto block = p.cov().block(lo, lo, m.num_features,
                                           m.num_features);
          var = ((phi * block).array() * phi.array()).rowwise().sum();
        }
        out.col(a) -= radius * var.cwiseMax(0.0).cwiseSqrt();
      }
    }
    return out;
  };
}

namespace {

Policy policy_from_bound(const StageBound& bound) {
  Policy policy;
  policy.action_count = bound.action_count;
  policy.batch_scores = bound.batch;
  return policy;
}

std::vector<int> fold_indices(int n, int stages, int stage, bool cross_fit) {
  std::vector<int> rows;
  if (!cross_fit || stages == 1) {
    rows.resize(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    return rows;
  }
  for (int i = 0; i < n; ++i)
    if (i % stages == stage - 1) rows.push_back(i);
  return rows;
}

}  // namespace

StagePolicySet backward_induct(const TrajectoryDataset& data,
                               ModelFamily family, double alpha,
                               const DtrConfig& config) {
  data.validate();
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("backward_induct: alpha must be in (0,1)");
  const int t_count = data.stages();
  const int n = data.size();
  const double stage_alpha = alpha / t_count;

  StagePolicySet set;
  set.action_count = data.action_count;
  set.bounds.resize(t_count);
  set.policies.resize(t_count);
  set.stage_alphas.assign(t_count, stage_alpha);
  set.history_dims.resize(t_count);

  Vector rewards = data.terminal_rewards;
  for (int stage = t_count; stage >= 1; --stage) {
    set.history_dims[stage - 1] = data.history_dim(stage);
    const Matrix histories = data.histories(stage);
    const std::vector<int> rows =
        fold_indices(n, t_count, stage, config.cross_fit);

    Dataset stage_data;
    stage_data.action_count = data.action_count;
    stage_data.states.resize(static_cast<Eigen::Index>(rows.size()),
                             histories.cols());
    stage_data.actions.resize(static_cast<Eigen::Index>(rows.size()));
    stage_data.rewards.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      stage_data.states.row(static_cast<Eigen::Index>(r)) =
          histories.row(rows[r]);
      stage_data.actions(static_cast<Eigen::Index>(r)) =
          data.actions[stage - 1](rows[r]);
      stage_data.rewards(static_cast<Eigen::Index>(r)) = rewards(rows[r]);
    }

    StageBound bound;
    bound.action_count = data.action_count;
    try {
      if (family == ModelFamily::kBlbm) {
        const FeatureMap map =
            make_stage_map(config.basis, static_cast<int>(histories.cols()),
                           data.action_count, stage);
        GaussianPosterior post = blbm_fit(stage_data, map, config.blbm);
        bound.batch = blbm_bound_batch(
            std::move(post), map, config.pessimistic ? stage_alpha : 0.0);
      } else {
        MlpArchitecture arch;
        arch.input_dim = static_cast<int>(histories.cols());
        arch.hidden = config.hidden;
        arch.output_dim = data.action_count;
        BnnTrainConfig bnn_cfg = config.bnn;
        bnn_cfg.seed = derive_seed(config.seed,
                                   {static_cast<std::uint64_t>(stage), 1});
        BnnFitResult fit = bnn_fit(stage_data, arch, bnn_cfg);
        if (config.pessimistic) {
          auto model = std::make_shared<const MlpQModel>(arch);
          auto lb = std::make_shared<const LowerBoundFn>(
              model, std::move(fit.posterior), stage_alpha,
              config.num_posterior_samples,
              RandomSeed{derive_seed(config.seed,
                                     {static_cast<std::uint64_t>(stage), 2})});
          bound.batch = [lb](const Matrix& states) {
            return lb->evaluate_batch(states);
          };
        } else {
          const Vector mean = fit.params.mu;
          bound.batch = [arch, mean](const Matrix& states) {
            return mlp_forward_batch(arch, mean, states);
          };
        }
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("backward_induct: stage " +
                               std::to_string(stage) +
                               " fit failed: " + e.what());
    }

    set.bounds[stage - 1] = bound;
    set.policies[stage - 1] = policy_from_bound(bound);

    if (stage > 1) {
      // Pseudo-rewards for stage K-1: max_a of the stage-K bound, at every
      // trajectory regardless of the fitting fold.
      rewards = bound.batch(histories).rowwise().maxCoeff();
    }
  }
  return set;
}

int run_stage_policy(const StagePolicySet& set,
                     const std::vector<Vector>& states,
                     const std::vector<int>& actions) {
  const int stage = static_cast<int>(states.size());
  if (stage < 1 || stage > set.stages())
    throw std::invalid_argument("run_stage_policy: prefix length mismatch");
  const Vector history = flatten_history(states, actions, set.action_count);
  if (history.size() != set.history_dims[stage - 1])
    throw std::invalid_argument("run_stage_policy: malformed prefix");
  return set.policies[stage - 1].act(history);
}

}  // namespace pbl
