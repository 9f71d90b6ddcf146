#pragma once

#include <vector>

#include "pbl/blbm.hpp"
#include "pbl/dataset.hpp"
#include "pbl/numerics.hpp"

namespace pbl {

/// Fully connected ReLU network with one output head per action.
struct MlpArchitecture {
  int input_dim = 0;
  std::vector<int> hidden = {16, 16};
  int output_dim = 0;

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  int param_count() const;
  void validate() const;
};

/// Mean-field variational parameters; the weight standard deviation is
/// softplus(rho) elementwise.
struct VariationalParams {
  Vector mu;
  Vector rho;
};

struct BnnTrainConfig {
  double learning_rate = 1e-4;
  int epochs = 500;
  int batch_size = 100;
  int mc_samples = 5;
  double likelihood_variance = 0.5;
  double prior_std = 1.0;
  std::uint64_t seed = 0;
  void validate() const;
};

class TrainingDivergenceError : public std::runtime_error {
 public:
  TrainingDivergenceError(int epoch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

double softplus(double x);
double sigmoid(double x);

/// mu ~ N(0, 0.1^2), rho = -3 (std ~ 0.0486); deterministic given seed.
VariationalParams bnn_init(const MlpArchitecture& arch, RandomSeed seed);

/// Deterministic forward pass: ReLU hidden layers, identity output.
/// Weight layout per layer: W (fan_out x fan_in, row-major), then bias.
Vector mlp_forward(const MlpArchitecture& arch, const Vector& weights,
                   const Vector& input);

/// Batched forward pass over rows of `inputs` (n x input_dim).
Matrix mlp_forward_batch(const MlpArchitecture& arch, const Vector& weights,
                         const Matrix& inputs);

struct ElboResult {
  double elbo = 0.0;
  Vector grad_mu;
  Vector grad_rho;
};

/// Reparameterized ELBO and its exact gradient. For each noise row e_m the
/// weights are w_m = mu + softplus(rho) * e_m; the Gaussian log likelihood
/// of the batch (only the head of the logged action contributes per row) is
/// rescaled by n_total / batch_rows, averaged over the rows of
/// `noise_draws`, and the closed-form KL against the N(0, prior_std^2 I)
/// prior is subtracted. Gradients flow through the network by reverse-mode
/// accumulation and through the reparameterization by the chain rule.
ElboResult elbo_and_grad(const VariationalParams& params,
                         const MlpArchitecture& arch, const Matrix& states,
                         const IntVector& actions, const Vector& rewards,
                         double n_total, double likelihood_variance,
                         double prior_std, const Matrix& noise_draws);

/// KL[q || prior] between diagonal Gaussians; >= 0, zero iff q equals the
/// prior.
double kl_to_prior(const VariationalParams& params, double prior_std);

struct BnnFitResult {
  VariationalParams params;
  GaussianPosterior posterior;  // diagonal: mean mu, var softplus(rho)^2
  Vector epoch_losses;          // mean negative ELBO per epoch
};

/// Plain SGD over shuffled mini-batches for the configured number of
/// epochs. Throws TrainingDivergenceError (carrying the epoch) if the ELBO
/// becomes non-finite.
BnnFitResult bnn_fit(const Dataset& data, const MlpArchitecture& arch,
                     const BnnTrainConfig& config);

}  // namespace pbl
