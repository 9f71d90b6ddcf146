#include <doctest.h>

#include <cmath>

#include "pbl/bnn.hpp"

using namespace pbl;

namespace {

double elbo_value(const VariationalParams& params, const MlpArchitecture& arch,
                  const Matrix& states, const IntVector& actions,
                  const Vector& rewards, double n_total, double lik_var,
                  double prior_std, const Matrix& noise) {
  return elbo_and_grad(params, arch, states, actions, rewards, n_total,
                       lik_var, prior_std, noise)
      .elbo;
}

struct GradCheckCase {
  MlpArchitecture arch;
  Matrix states;
  IntVector actions;
  Vector rewards;
  Matrix noise;
  VariationalParams params;
};

GradCheckCase make_case(const MlpArchitecture& arch, std::uint64_t seed,
                        int batch = 8, int mc = 3) {
  GradCheckCase c;
  c.arch = arch;
  const int p = arch.param_count();
  Rng rng(seed);
  c.states.resize(batch, arch.input_dim);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < arch.input_dim; ++j) c.states(i, j) = rng.normal();
  c.actions.resize(batch);
  for (int i = 0; i < batch; ++i) c.actions(i) = rng.uniform_int(arch.output_dim);
  c.rewards.resize(batch);
  for (int i = 0; i < batch; ++i) c.rewards(i) = rng.normal();
  c.noise.resize(mc, p);
  for (int m = 0; m < mc; ++m)
    for (int j = 0; j < p; ++j) c.noise(m, j) = rng.normal();
  c.params.mu.resize(p);
  c.params.rho.resize(p);
  for (int j = 0; j < p; ++j) {
    c.params.mu(j) = 0.5 * rng.normal();
    c.params.rho(j) = -1.5 + 0.5 * rng.normal();
  }
  return c;
}

// Max relative error between the analytic gradient and central differences.
double gradcheck(const GradCheckCase& c, double lik_var, double prior_std) {
  const double h = 1e-6;
  const int p = c.arch.param_count();
  const ElboResult res =
      elbo_and_grad(c.params, c.arch, c.states, c.actions, c.rewards,
                    static_cast<double>(c.states.rows()), lik_var, prior_std,
                    c.noise);
  double worst = 0.0;
  for (int which = 0; which < 2; ++which) {
    for (int j = 0; j < p; ++j) {
      VariationalParams up = c.params, dn = c.params;
      Vector& up_v = which == 0 ? up.mu : up.rho;
      Vector& dn_v = which == 0 ? dn.mu : dn.rho;
      up_v(j) += h;
      dn_v(j) -= h;
      const double fd =
          (elbo_value(up, c.arch, c.states, c.actions, c.rewards,
                      static_cast<double>(c.states.rows()), lik_var,
                      prior_std, c.noise) -
           elbo_value(dn, c.arch, c.states, c.actions, c.rewards,
                      static_cast<double>(c.states.rows()), lik_var,
                      prior_std, c.noise)) /
          (2.0 * h);
      const double analytic = which == 0 ? res.grad_mu(j) : res.grad_rho(j);
      const double denom =
          std::max({std::fabs(analytic), std::fabs(fd), 1e-3});
      worst = std::max(worst, std::fabs(analytic - fd) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("parameter count matches the layer algebra") {
  MlpArchitecture arch;
  arch.input_dim = 3;
  arch.hidden = {16, 16};
  arch.output_dim = 2;
  CHECK(arch.param_count() == 16 * 4 + 16 * 17 + 2 * 17);  // 370
}

TEST_CASE("bnn_init is deterministic with the documented scales") {
  MlpArchitecture arch;
  arch.input_dim = 3;
  arch.hidden = {16, 16};
  arch.output_dim = 2;
  const VariationalParams a = bnn_init(arch, RandomSeed{7});
  const VariationalParams b = bnn_init(arch, RandomSeed{7});
  CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.rho.array() + 3.0).abs().maxCoeff() == 0.0);
  CHECK(softplus(-3.0) == doctest::Approx(0.0486).epsilon(1e-3));

  // Zero weights give the zero network.
  const Vector out =
      mlp_forward(arch, Vector::Zero(arch.param_count()), Vector::Ones(3));
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward pass matches a hand computation on one hidden unit") {
  MlpArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = {1};
  arch.output_dim = 1;
  Vector w(4);
  w << 1.0, 0.0, 1.0, 0.0;  // W0 = 1, b0 = 0, W1 = 1, b1 = 0
  Vector s(1);
  s << 2.0;
  CHECK(mlp_forward(arch, w, s)(0) == doctest::Approx(2.0));
  s << -2.0;  // ReLU kills the negative preactivation
  CHECK(mlp_forward(arch, w, s)(0) == doctest::Approx(0.0));
}

TEST_CASE("forward pass matches an independent recomputation") {
  MlpArchitecture arch;
  arch.input_dim = 3;
  arch.hidden = {5, 4};
  arch.output_dim = 2;
  const int p = arch.param_count();
  Rng rng(91);
  Vector w(p);
  for (int j = 0; j < p; ++j) w(j) = rng.normal();
  Vector s(3);
  for (int j = 0; j < 3; ++j) s(j) = rng.normal();

  // Manual evaluation of the same algebra.
  Vector act = s;
  int offset = 0;
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int in = arch.fan_in(l), out = arch.fan_out(l);
    Vector z(out);
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += w(offset + o * in + i) * act(i);
      z(o) = acc + w(offset + in * out + o);
    }
    offset += (in + 1) * out;
    act = (l + 1 < arch.layer_count()) ? z.cwiseMax(0.0).eval() : z;
  }
  CHECK((mlp_forward(arch, w, s) - act).cwiseAbs().maxCoeff() < 1e-12);

  // Batched evaluation agrees with the single-state path.
  Matrix states(4, 3);
  Rng rng2(17);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) states(i, j) = rng2.normal();
  const Matrix batch = mlp_forward_batch(arch, w, states);
  for (int i = 0; i < 4; ++i)
    CHECK((batch.row(i).transpose() -
           mlp_forward(arch, w, states.row(i).transpose()))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("KL against the prior vanishes exactly at the prior") {
  MlpArchitecture arch;
  arch.input_dim = 2;
  arch.hidden = {3};
  arch.output_dim = 2;
  const int p = arch.param_count();
  const double prior_std = 0.7;
  VariationalParams params;
  params.mu = Vector::Zero(p);
  params.rho = Vector::Constant(p, std::log(std::expm1(prior_std)));
  CHECK(std::fabs(kl_to_prior(params, prior_std)) < 1e-12);

  Rng rng(5);
  for (int j = 0; j < p; ++j) params.mu(j) = rng.normal();
  CHECK(kl_to_prior(params, prior_std) > 0.0);
}

TEST_CASE("analytic ELBO gradient matches central differences") {
  std::vector<MlpArchitecture> archs(3);
  archs[0].input_dim = 1;
  archs[0].hidden = {};
  archs[0].output_dim = 1;  // affine model, 2 parameters
  archs[1].input_dim = 1;
  archs[1].hidden = {3};
  archs[1].output_dim = 2;  // 14 parameters
  archs[2].input_dim = 3;
  archs[2].hidden = {4, 3};
  archs[2].output_dim = 2;  // 39 parameters

  for (const MlpArchitecture& arch : archs) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const GradCheckCase c = make_case(arch, 1000 * arch.param_count() + seed);
      CHECK(gradcheck(c, 0.25, 1.0) < 1e-4);
    }
  }
}

TEST_CASE("doubling the likelihood variance damps the mean gradient") {
  MlpArchitecture arch;
  arch.input_dim = 2;
  arch.hidden = {4};
  arch.output_dim = 2;
  GradCheckCase c = make_case(arch, 333);
  c.rewards.array() += 5.0;  // clearly misfit batch
  c.params.mu.setZero();     // prior pull on mu vanishes at zero
  const ElboResult g1 =
      elbo_and_grad(c.params, c.arch, c.states, c.actions, c.rewards,
                    static_cast<double>(c.states.rows()), 0.25, 1.0, c.noise);
  const ElboResult g2 =
      elbo_and_grad(c.params, c.arch, c.states, c.actions, c.rewards,
                    static_cast<double>(c.states.rows()), 0.50, 1.0, c.noise);
  for (int j = 0; j < arch.param_count(); ++j) {
    if (std::fabs(g1.grad_mu(j)) > 1e-8)
      CHECK(std::fabs(g2.grad_mu(j)) < std::fabs(g1.grad_mu(j)));
  }
}

TEST_CASE("five-draw ELBO estimates scatter around the many-draw value") {
  MlpArchitecture arch;
  arch.input_dim = 2;
  arch.hidden = {4};
  arch.output_dim = 2;
  const GradCheckCase c = make_case(arch, 444, 16, 5);
  const int p = arch.param_count();

  Rng rng(555);
  const int reps = 200;
  double sum = 0.0, sum_sq = 0.0;
  Matrix noise(5, p);
  for (int r = 0; r < reps; ++r) {
    for (int m = 0; m < 5; ++m)
      for (int j = 0; j < p; ++j) noise(m, j) = rng.normal();
    const double v =
        elbo_value(c.params, c.arch, c.states, c.actions, c.rewards, 16.0,
                   0.25, 1.0, noise);
    sum += v;
    sum_sq += v * v;
  }
  const double mean5 = sum / reps;
  const double sd5 = std::sqrt((sum_sq - reps * mean5 * mean5) / (reps - 1));

  Matrix big_noise(10000, p);
  for (int m = 0; m < 10000; ++m)
    for (int j = 0; j < p; ++j) big_noise(m, j) = rng.normal();
  const double ref =
      elbo_value(c.params, c.arch, c.states, c.actions, c.rewards, 16.0, 0.25,
                 1.0, big_noise);
  CHECK(std::fabs(mean5 - ref) < 4.0 * sd5 / std::sqrt(double(reps)));
}

TEST_CASE("bnn_fit makes optimization progress and is deterministic") {
  const int n = 400;
  Rng rng(777);
  Dataset data;
  data.action_count = 2;
  data.states.resize(n, 2);
  data.actions.resize(n);
  data.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    data.states(i, 0) = rng.normal();
    data.states(i, 1) = rng.normal();
    data.actions(i) = rng.uniform_int(2);
    data.rewards(i) =
        (data.actions(i) == 0 ? data.states(i, 0) : -data.states(i, 1)) +
        0.1 * rng.normal();
  }
  MlpArchitecture arch;
  arch.input_dim = 2;
  arch.hidden = {16, 16};
  arch.output_dim = 2;
  BnnTrainConfig config;
  config.epochs = 120;
  config.seed = 2;
  const BnnFitResult fit = bnn_fit(data, arch, config);
  CHECK(fit.epoch_losses(config.epochs - 1) <= fit.epoch_losses(0));

  const BnnFitResult again = bnn_fit(data, arch, config);
  CHECK((fit.params.mu - again.params.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fit.params.rho - again.params.rho).cwiseAbs().maxCoeff() == 0.0);

  BnnTrainConfig other = config;
  other.seed = 3;
  const BnnFitResult different = bnn_fit(data, arch, other);
  CHECK((fit.params.mu - different.params.mu).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("bnn_fit recovers a one-dimensional regression") {
  const int n = 2000;
  Rng rng(888);
  Dataset data;
  data.action_count = 1;
  data.states.resize(n, 1);
  data.actions = IntVector::Zero(n);
  data.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    data.states(i, 0) = rng.uniform(-1.0, 1.0);
    data.rewards(i) = 2.0 * data.states(i, 0) + 0.1 * rng.normal();
  }
  MlpArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = {16, 16};
  arch.output_dim = 1;
  BnnTrainConfig config;
  config.seed = 5;
  const BnnFitResult fit = bnn_fit(data, arch, config);

  double mse = 0.0;
  const int held_out = 500;
  Rng test_rng(999);
  for (int i = 0; i < held_out; ++i) {
    Vector s(1);
    s << test_rng.uniform(-1.0, 1.0);
    const double pred = mlp_forward(arch, fit.params.mu, s)(0);
    mse += (pred - 2.0 * s(0)) * (pred - 2.0 * s(0));
  }
  mse /= held_out;
  CHECK(mse <= 0.05);
}

TEST_CASE("bnn_fit reports divergence with the failing epoch") {
  const int n = 200;
  Rng rng(111);
  Dataset data;
  data.action_count = 1;
  data.states.resize(n, 1);
  data.actions = IntVector::Zero(n);
  data.rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    data.states(i, 0) = rng.normal();
    data.rewards(i) = 100.0 * data.states(i, 0);
  }
  MlpArchitecture arch;
  arch.input_dim = 1;
  arch.hidden = {8};
  arch.output_dim = 1;
  BnnTrainConfig config;
  config.learning_rate = 1e12;  // guaranteed blow-up
  config.epochs = 5;
  CHECK_THROWS_AS(bnn_fit(data, arch, config), TrainingDivergenceError);
}
