#include "pbl/baselines.hpp"

#include <cmath>

namespace pbl {

namespace {

// Builds the joint feature matrix with the block one-hot layout.
Matrix joint_features(const Dataset& data, const FeatureMap& map) {
  const int n = data.size();
  Matrix phi = Matrix::Zero(n, map.joint_dim());
  if (n == 0) return phi;
  const Matrix state_feats = encode_states(map, data.states);
  for (int i = 0; i < n; ++i)
    phi.row(i).segment(
        static_cast<Eigen::Index>(data.actions(i)) * map.num_features,
        map.num_features) = state_feats.row(i);
  return phi;
}

double pevi_log_term(const PeviModel& model) {
  const double arg = 2.0 * model.feature_dim * model.n / model.xi;
  if (arg <= 1.0)
    throw std::domain_error(
        "pevi_lower_bound: log(2 d n / xi) not positive; the sample size is "
        "too small for the uncertainty quantifier");
  return std::sqrt(std::log(arg));
}

// Batched PEVI scores over raw states, exploiting the block layout of the
// features: both the mean and the leverage only touch the (a,a) block.
std::function<Matrix(const Matrix&)> pevi_bound_batch(
    std::shared_ptr<const PeviModel> model,
    std::shared_ptr<const FeatureMap> map) {
  return [model, map](const Matrix& states) {
    const FeatureMap& m = *map;
    const PeviModel& pm = *model;
    const double log_term = pm.c > 0.0 ? pevi_log_term(pm) : 0.0;
    const Matrix phi = encode_states(m, states);
    Matrix out(states.rows(), m.action_count);
    for (int a = 0; a < m.action_count; ++a) {
      const Eigen::Index lo = static_cast<Eigen::Index>(a) * m.num_features;
      out.col(a) = phi * pm.ridge_weights.segment(lo, m.num_features);
      if (pm.c > 0.0) {
        const auto block = pm.lambda_inv.block(lo, lo, m.num_features,
                                               m.num_features);
        const Vector leverage =
            ((phi * block).array() * phi.array()).rowwise().sum();
        out.col(a) -= pm.c * pm.feature_dim * log_term *
                      leverage.cwiseMax(0.0).cwiseSqrt().array().matrix();
      }
    }
    return out;
  };
}

}  // namespace

PeviModel pevi_fit(const Dataset& data, const FeatureMap& map, double lambda,
                   double c, double xi) {
  data.validate();
  if (!(lambda > 0.0))
    throw std::invalid_argument("pevi_fit: lambda must be > 0");
  if (c < 0.0) throw std::invalid_argument("pevi_fit: c must be >= 0");
  if (!(xi > 0.0 && xi < 1.0))
    throw std::invalid_argument("pevi_fit: xi must be in (0,1)");

  const Matrix phi = joint_features(data, map);
  Matrix lambda_mat = phi.transpose() * phi;
  lambda_mat.diagonal().array() += lambda;
  const Matrix chol = cholesky(lambda_mat);
  PeviModel model;
  model.lambda_inv = chol_inverse(chol);
  model.lambda_inv = 0.5 * (model.lambda_inv + model.lambda_inv.transpose());
  model.ridge_weights = model.lambda_inv * (phi.transpose() * data.rewards);
  model.c = c;
  model.xi = xi;
  model.lambda = lambda;
  model.n = data.size();
  model.feature_dim = map.joint_dim();
  return model;
}

double pevi_penalty(const PeviModel& model, const Vector& phi) {
  if (phi.size() != model.feature_dim)
    throw std::invalid_argument("pevi_penalty: feature dimension mismatch");
  if (model.c == 0.0) return 0.0;
  const double leverage = std::max(0.0, phi.dot(model.lambda_inv * phi));
  return model.c * model.feature_dim * std::sqrt(leverage) *
         pevi_log_term(model);
}

double pevi_lower_bound(const PeviModel& model, const Vector& phi) {
  return model.ridge_weights.dot(phi) - pevi_penalty(model, phi);
}

Policy pevi_policy(const PeviModel& model, const FeatureMap& map) {
  if (map.joint_dim() != model.feature_dim)
    throw std::invalid_argument("pevi_policy: map/model mismatch");
  Policy policy;
  policy.action_count = map.action_count;
  policy.batch_scores =
      pevi_bound_batch(std::make_shared<const PeviModel>(model),
                       std::make_shared<const FeatureMap>(map));
  return policy;
}

Policy nonpessi_policy(ModelFamily family, const Dataset& data,
                       const DtrConfig& config) {
  data.validate();
  Policy policy;
  policy.action_count = data.action_count;
  if (family == ModelFamily::kBlbm) {
    const FeatureMap map = make_stage_map(config.basis, data.state_dim(),
                                          data.action_count, 1);
    GaussianPosterior post = blbm_fit(data, map, config.blbm);
    policy.batch_scores = blbm_bound_batch(std::move(post), map, 0.0);
  } else {
    MlpArchitecture arch;
    arch.input_dim = data.state_dim();
    arch.hidden = config.hidden;
    arch.output_dim = data.action_count;
    BnnTrainConfig bnn_cfg = config.bnn;
    bnn_cfg.seed = derive_seed(config.seed, {1, 1});
    const BnnFitResult fit = bnn_fit(data, arch, bnn_cfg);
    const Vector mean = fit.params.mu;
    policy.batch_scores = [arch, mean](const Matrix& states) {
      return mlp_forward_batch(arch, mean, states);
    };
  }
  return policy;
}

StagePolicySet pevi_policy_dtr(const TrajectoryDataset& data,
                               const BasisConfig& basis, double lambda,
                               double c, double xi) {
  data.validate();
  const int t_count = data.stages();

  StagePolicySet set;
  set.action_count = data.action_count;
  set.bounds.resize(t_count);
  set.policies.resize(t_count);
  set.history_dims.resize(t_count);

  Vector rewards = data.terminal_rewards;
  for (int stage = t_count; stage >= 1; --stage) {
    set.history_dims[stage - 1] = data.history_dim(stage);
    const Matrix histories = data.histories(stage);

    Dataset stage_data;
    stage_data.action_count = data.action_count;
    stage_data.states = histories;
    stage_data.actions = data.actions[stage - 1];
    stage_data.rewards = rewards;

    const FeatureMap map = make_stage_map(
        basis, static_cast<int>(histories.cols()), data.action_count, stage);
    PeviModel model;
    try {
      model = pevi_fit(stage_data, map, lambda, c, xi);
    } catch (const std::exception& e) {
      throw std::runtime_error("pevi_policy_dtr: stage " +
                               std::to_string(stage) +
                               " fit failed: " + e.what());
    }
    StageBound bound;
    bound.action_count = data.action_count;
    bound.batch = pevi_bound_batch(std::make_shared<const PeviModel>(model),
                                   std::make_shared<const FeatureMap>(map));
    set.bounds[stage - 1] = bound;
    Policy policy;
    policy.action_count = data.action_count;
    policy.batch_scores = bound.batch;
    set.policies[stage - 1] = policy;

    if (stage > 1) rewards = bound.batch(histories).rowwise().maxCoeff();
  }
  return set;
}

}  // namespace pbl
