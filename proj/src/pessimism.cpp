#include "pbl/pessimism.hpp"

#include <iostream>

namespace pbl {

std::vector<int> credible_filter(const Matrix& samples,
                                 const GaussianPosterior& post, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("credible_filter: alpha must be in (0,1)");
  if (samples.cols() != post.dim())
    throw std::invalid_argument("credible_filter: sample width != dim");
  const double radius_sq = chi2_quantile(1.0 - alpha, post.dim());
  const Eigen::Index n = samples.rows();

  Vector quad(n);
  if (post.is_diagonal()) {
    const Matrix centered = samples.rowwise() - post.mean().transpose();
    quad = (centered.array().square().rowwise() /
            post.var_diag().transpose().array())
               .rowwise()
               .sum();
  } else {
    // One batched triangular solve: columns of Y solve L Y = (S - mean)^T.
    Matrix centered_t = (samples.rowwise() - post.mean().transpose()).transpose();
    post.chol().triangularView<Eigen::Lower>().solveInPlace(centered_t);
    quad = centered_t.array().square().colwise().sum().transpose();
  }

  std::vector<int> accepted;
  accepted.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j)
    if (quad(j) <= radius_sq) accepted.push_back(static_cast<int>(j));
  return accepted;
}

LowerBoundFn::LowerBoundFn(std::shared_ptr<const QModel> model,
                           GaussianPosterior post, double alpha,
                           int num_samples, RandomSeed seed) {
  if (!model) throw std::invalid_argument("LowerBoundFn: null model");
  if (model->param_dim() != post.dim())
    throw std::invalid_argument("LowerBoundFn: model/posterior dim mismatch");
  if (num_samples < 1)
    throw std::invalid_argument("LowerBoundFn: num_samples must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("LowerBoundFn: alpha must be in (0,1)");

  model_ = std::move(model);
  posterior_ = std::move(post);
  alpha_ = alpha;
  num_samples_ = num_samples;
  seed_ = seed.value;

  Rng rng(seed);
  const Matrix samples = posterior_.sample(num_samples, rng);
  const std::vector<int> keep = credible_filter(samples, posterior_, alpha);
  if (keep.empty()) {
    std::cerr << "warning: credible filter accepted no samples; "
                 "falling back to the posterior mean\n";
    accepted_ = posterior_.mean().transpose();
    fallback_ = true;
    return;
  }
  accepted_.resize(static_cast<Eigen::Index>(keep.size()), posterior_.dim());
  for (std::size_t r = 0; r < keep.size(); ++r)
    accepted_.row(static_cast<Eigen::Index>(r)) = samples.row(keep[r]);
}

LowerBoundFn LowerBoundFn::with_cache(std::shared_ptr<const QModel> model,
                                      GaussianPosterior post, double alpha,
                                      Matrix accepted) {
  if (!model) throw std::invalid_argument("LowerBoundFn: null model");
  if (accepted.rows() < 1)
    throw std::invalid_argument("LowerBoundFn: empty cache");
  if (accepted.cols() != model->param_dim())
    throw std::invalid_argument("LowerBoundFn: cache width mismatch");
  LowerBoundFn fn;
  fn.model_ = std::move(model);
  fn.posterior_ = std::move(post);
  fn.alpha_ = alpha;
  fn.num_samples_ = static_cast<int>(accepted.rows());
  fn.accepted_ = std::move(accepted);
  return fn;
}

double LowerBoundFn::evaluate(const Vector& s, int a) const {
  if (a < 0 || a >= model_->action_count())
    throw std::invalid_argument("LowerBoundFn: action out of range");
  return evaluate_all(s)(a);
}

Vector LowerBoundFn::evaluate_all(const Vector& s) const {
  return evaluate_batch(s.transpose()).row(0).transpose();
}

Matrix LowerBoundFn::evaluate_batch(const Matrix& states) const {
  return model_->min_over_weights(states, accepted_);
}

int argmax_lowest_tie(const Vector& scores) {
  int best = 0;
  for (int a = 1; a < scores.size(); ++a)
    if (scores(a) > scores(best)) best = a;
  return best;
}

int Policy::act(const Vector& s) const {
  return argmax_lowest_tie(batch_scores(s.transpose()).row(0).transpose());
}

IntVector Policy::act_batch(const Matrix& states) const {
  const Matrix scores = batch_scores(states);
  IntVector actions(states.rows());
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    actions(i) = argmax_lowest_tie(scores.row(i).transpose());
  return actions;
}

Vector Policy::scores(const Vector& s) const {
  return batch_scores(s.transpose()).row(0).transpose();
}

Policy greedy_policy(std::shared_ptr<const LowerBoundFn> bound) {
  if (!bound) throw std::invalid_argument("greedy_policy: null bound");
  Policy policy;
  policy.action_count = bound->model().action_count();
  policy.batch_scores = [bound](const Matrix& states) {
    return bound->evaluate_batch(states);
  };
  return policy;
}

Policy greedy_policy(const LowerBoundFn& bound) {
  return greedy_policy(std::make_shared<const LowerBoundFn>(bound));
}

}  // namespace pbl
