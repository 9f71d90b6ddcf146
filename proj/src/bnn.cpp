#include "pbl/bnn.hpp"

#include <cmath>

namespace pbl {

namespace {
using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using WeightMap = Eigen::Map<const RowMajor>;
using WeightMapMut = Eigen::Map<RowMajor>;
}  // namespace

int MlpArchitecture::fan_in(int layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

int MlpArchitecture::fan_out(int layer) const {
  return layer == static_cast<int>(hidden.size()) ? output_dim
                                                  : hidden[layer];
}

int MlpArchitecture::param_count() const {
  int p = 0;
  for (int l = 0; l < layer_count(); ++l) p += (fan_in(l) + 1) * fan_out(l);
  return p;
}

void MlpArchitecture::validate() const {
  if (input_dim < 1 || output_dim < 1)
    throw std::invalid_argument("MlpArchitecture: dims must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("MlpArchitecture: width < 1");
}

void BnnTrainConfig::validate() const {
  if (!(learning_rate > 0.0) || epochs < 1 || batch_size < 1 ||
      mc_samples < 1 || !(likelihood_variance > 0.0) || !(prior_std > 0.0))
    throw std::invalid_argument("BnnTrainConfig: all fields must be positive");
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

VariationalParams bnn_init(const MlpArchitecture& arch, RandomSeed seed) {
  arch.validate();
  const int p = arch.param_count();
  Rng rng(seed);
  VariationalParams params;
  params.mu.resize(p);
  for (int j = 0; j < p; ++j) params.mu(j) = 0.1 * rng.normal();
  params.rho = Vector::Constant(p, -3.0);
  return params;
}

Vector mlp_forward(const MlpArchitecture& arch, const Vector& weights,
                   const Vector& input) {
  if (input.size() != arch.input_dim)
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Matrix out = mlp_forward_batch(arch, weights, input.transpose());
  return out.row(0).transpose();
}

Matrix mlp_forward_batch(const MlpArchitecture& arch, const Vector& weights,
                         const Matrix& inputs) {
  if (weights.size() != arch.param_count())
    throw std::invalid_argument("mlp_forward: weight dimension mismatch");
  if (inputs.cols() != arch.input_dim)
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Matrix act = inputs;
  Eigen::Index offset = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.fan_in(l);
    const int out = arch.fan_out(l);
    WeightMap w(weights.data() + offset, out, in);
    offset += static_cast<Eigen::Index>(in) * out;
    Eigen::Map<const Vector> b(weights.data() + offset, out);
    offset += out;
    Matrix z = act * w.transpose();
    z.rowwise() += b.transpose();
    if (l + 1 < arch.layer_count()) {
      act = z.cwiseMax(0.0);
    } else {
      act = std::move(z);
    }
  }
  return act;
}

double kl_to_prior(const VariationalParams& params, double prior_std) {
  const double s2 = prior_std * prior_std;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < params.mu.size(); ++j) {
    const double sd = softplus(params.rho(j));
    kl += std::log(prior_std / sd) +
          (sd * sd + params.mu(j) * params.mu(j)) / (2.0 * s2) - 0.5;
  }
  return kl;
}

ElboResult elbo_and_grad(const VariationalParams& params,
                         const MlpArchitecture& arch, const Matrix& states,
                         const IntVector& actions, const Vector& rewards,
                         double n_total, double likelihood_variance,
                         double prior_std, const Matrix& noise_draws) {
  arch.validate();
  const int p = arch.param_count();
  const Eigen::Index batch = states.rows();
  if (params.mu.size() != p || params.rho.size() != p)
    throw std::invalid_argument("elbo_and_grad: parameter size mismatch");
  if (noise_draws.cols() != p)
    throw std::invalid_argument("elbo_and_grad: noise draw width != p");
  if (actions.size() != batch || rewards.size() != batch || batch == 0)
    throw std::invalid_argument("elbo_and_grad: batch shape mismatch");

  const int n_layers = arch.layer_count();
  const int mc = static_cast<int>(noise_draws.rows());
  const double scale = n_total / static_cast<double>(batch);
  const double inv_var = 1.0 / likelihood_variance;

  Vector sd(p), gate(p);
  for (int j = 0; j < p; ++j) {
    sd(j) = softplus(params.rho(j));
    gate(j) = sigmoid(params.rho(j));
  }

  Vector grad_mu_acc = Vector::Zero(p);
  Vector grad_rho_acc = Vector::Zero(p);
  double lik_acc = 0.0;

  Vector w(p), grad_w(p);
  std::vector<Matrix> acts(n_layers + 1);  // acts[0] = inputs
  std::vector<Matrix> pre(n_layers);
  for (int m = 0; m < mc; ++m) {
    w = params.mu + sd.cwiseProduct(noise_draws.row(m).transpose());

    // Forward, keeping pre-activations for the backward sweep.
    acts[0] = states;
    Eigen::Index offset = 0;
    for (int l = 0; l < n_layers; ++l) {
      const int in = arch.fan_in(l);
      const int out = arch.fan_out(l);
      WeightMap wl(w.data() + offset, out, in);
      Eigen::Map<const Vector> bl(w.data() + offset +
                                      static_cast<Eigen::Index>(in) * out,
                                  out);
      pre[l] = acts[l] * wl.transpose();
      pre[l].rowwise() += bl.transpose();
      acts[l + 1] =
          (l + 1 < n_layers) ? pre[l].cwiseMax(0.0).eval() : pre[l];
      offset += static_cast<Eigen::Index>(in + 1) * out;
    }

    // Scaled Gaussian log likelihood of the logged-action heads.
    const Matrix& out_layer = acts[n_layers];
    Matrix g = Matrix::Zero(batch, arch.output_dim);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
      const double resid = rewards(i) - out_layer(i, actions(i));
      ll += -0.5 * std::log(2.0 * M_PI * likelihood_variance) -
            0.5 * resid * resid * inv_var;
      g(i, actions(i)) = scale * resid * inv_var;
    }
    lik_acc += scale * ll;

    // Reverse sweep.
    grad_w.setZero();
    offset = static_cast<Eigen::Index>(p);
    for (int l = n_layers - 1; l >= 0; --l) {
      const int in = arch.fan_in(l);
      const int out = arch.fan_out(l);
      offset -= static_cast<Eigen::Index>(in + 1) * out;
      WeightMapMut gw(grad_w.data() + offset, out, in);
      Eigen::Map<Vector> gb(grad_w.data() + offset +
                                static_cast<Eigen::Index>(in) * out,
                            out);
      gw = g.transpose() * acts[l];
      gb = g.colwise().sum().transpose();
      if (l > 0) {
        WeightMap wl(w.data() + offset, out, in);
        Matrix back = g * wl;
        g = back.cwiseProduct(
            (pre[l - 1].array() > 0.0).cast<double>().matrix());
      }
    }
    grad_mu_acc += grad_w;
    grad_rho_acc += grad_w.cwiseProduct(noise_draws.row(m).transpose());
  }

  const double inv_mc = 1.0 / static_cast<double>(mc);
  ElboResult result;
  result.grad_mu = grad_mu_acc * inv_mc;
  result.grad_rho = grad_rho_acc.cwiseProduct(gate) * inv_mc;

  // Closed-form KL against the prior and its gradient.
  const double prior_var = prior_std * prior_std;
  double kl = 0.0;
  for (int j = 0; j < p; ++j) {
    kl += std::log(prior_std / sd(j)) +
          (sd(j) * sd(j) + params.mu(j) * params.mu(j)) / (2.0 * prior_var) -
          0.5;
    result.grad_mu(j) -= params.mu(j) / prior_var;
    result.grad_rho(j) -= (-1.0 / sd(j) + sd(j) / prior_var) * gate(j);
  }
  result.elbo = lik_acc * inv_mc - kl;
  return result;
}

BnnFitResult bnn_fit(const Dataset& data, const MlpArchitecture& arch,
                     const BnnTrainConfig& config) {
  data.validate();
  arch.validate();
  config.validate();
  if (arch.input_dim != data.state_dim())
    throw std::invalid_argument("bnn_fit: architecture/state dim mismatch");
  if (arch.output_dim != data.action_count)
    throw std::invalid_argument("bnn_fit: output_dim must equal action count");
  const int n = data.size();
  if (n < 1) throw std::invalid_argument("bnn_fit: empty dataset");

  const int p = arch.param_count();
  VariationalParams params =
      bnn_init(arch, RandomSeed{derive_seed(config.seed, {0})});
  Rng train_rng(derive_seed(config.seed, {1}));

  const int batch_size = std::min(config.batch_size, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Vector epoch_losses(config.epochs);
  Matrix noise(config.mc_samples, p);
  Matrix batch_states(batch_size, data.state_dim());
  IntVector batch_actions(batch_size);
  Vector batch_rewards(batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates shuffle from the training stream.
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[train_rng.uniform_int(i + 1)]);

    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch_size) {
      const int rows = std::min(batch_size, n - start);
      if (batch_states.rows() != rows) {
        batch_states.resize(rows, data.state_dim());
        batch_actions.resize(rows);
        batch_rewards.resize(rows);
      }
      for (int i = 0; i < rows; ++i) {
        const int idx = order[start + i];
        batch_states.row(i) = data.states.row(idx);
        batch_actions(i) = data.actions(idx);
        batch_rewards(i) = data.rewards(idx);
      }
      for (int m = 0; m < config.mc_samples; ++m)
        for (int j = 0; j < p; ++j) noise(m, j) = train_rng.normal();

      const ElboResult step = elbo_and_grad(
          params, arch, batch_states, batch_actions, batch_rewards,
          static_cast<double>(n), config.likelihood_variance,
          config.prior_std, noise);
      if (!std::isfinite(step.elbo))
        throw TrainingDivergenceError(
            epoch, "bnn_fit: non-finite ELBO at epoch " +
                       std::to_string(epoch));
      params.mu += config.learning_rate * step.grad_mu;
      params.rho += config.learning_rate * step.grad_rho;
      loss_sum += -step.elbo;
      ++batches;
    }
    epoch_losses(epoch) = loss_sum / batches;
  }

  Vector variances(p);
  for (int j = 0; j < p; ++j) {
    const double sd = softplus(params.rho(j));
    variances(j) = sd * sd;
  }
  BnnFitResult result;
  result.posterior = GaussianPosterior::diagonal(params.mu, variances);
  result.params = std::move(params);
  result.epoch_losses = std::move(epoch_losses);
  return result;
}

}  // namespace pbl
