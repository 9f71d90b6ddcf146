// Command-line front end: data generation, model fitting, policy
// construction, evaluation, and the experiment harness.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "pbl/experiment.hpp"

namespace fs = std::filesystem;
using pbl::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

pbl::EnvSpec env_spec_from_flags(const std::string& kind, double epsilon,
                                 double sigma, std::uint64_t structural_seed,
                                 const std::string& behavior) {
  Json j;
  j["kind"] = kind;
  j["epsilon"] = epsilon;
  j["noise_sigma"] = sigma;
  j["structural_seed"] = structural_seed;
  j["behavior_convention"] = behavior;
  return pbl::env_spec_from_json(j);
}

struct GenDataArgs {
  std::string kind = "single_linear";
  int n = 1000;
  std::uint64_t seed = 1;
  double epsilon = 0.5;
  double sigma = 0.1;
  std::uint64_t structural_seed = 1;
  std::string behavior = "optimal_with_prob_epsilon";
  std::string out = "data";
};

int cmd_gen_data(const GenDataArgs& args) {
  if (args.n < 1) throw std::invalid_argument("gen-data: --n must be >= 1");
  const pbl::EnvSpec spec =
      env_spec_from_flags(args.kind, args.epsilon, args.sigma,
                          args.structural_seed, args.behavior);
  const std::string csv_path = args.out + ".csv";
  const std::string sidecar_path = args.out + ".json";
  if (spec.stages() == 1) {
    const pbl::Dataset data = pbl::gen_dataset(spec, args.n,
                                               pbl::RandomSeed{args.seed});
    pbl::write_dataset_csv(data, csv_path);
  } else {
    const pbl::TrajectoryDataset data =
        pbl::gen_trajectories(spec, args.n, pbl::RandomSeed{args.seed});
    pbl::write_trajectories_csv(data, csv_path);
  }
  pbl::write_dataset_sidecar(spec, args.n, args.seed, csv_path, sidecar_path);
  std::cout << "wrote " << csv_path << " and " << sidecar_path << "\n";
  return kExitOk;
}

struct FitArgs {
  std::string data;
  std::string method = "blbm";
  std::string out = "fit.json";
  std::string basis = "rff";
  int num_features = 100;
  double bandwidth = 1.0;
  std::uint64_t basis_seed = 0;
  double prior_variance = 1.0;
  double noise_variance = -1.0;  // <= 0: estimate from residuals
  double pevi_c = 1.0;
  double pevi_xi = 0.1;
  double pevi_lambda = 1.0;
  std::vector<int> hidden = {16, 16};
  double learning_rate = 1e-4;
  int epochs = 500;
  int batch_size = 100;
  int mc_samples = 5;
  double likelihood_variance = 0.25;
  double prior_std = 1.0;
  std::uint64_t seed = 0;
};

int cmd_fit(const FitArgs& args) {
  const pbl::Dataset data = pbl::read_dataset_csv(args.data);
  pbl::BasisConfig basis;
  basis.kind =
      args.basis == "identity" ? pbl::BasisKind::kIdentity : pbl::BasisKind::kRff;
  basis.num_features = args.num_features;
  basis.bandwidth = args.bandwidth;
  basis.seed = args.basis_seed;

  Json fit;
  if (args.method == "blbm") {
    const pbl::FeatureMap map =
        pbl::make_stage_map(basis, data.state_dim(), data.action_count, 1);
    pbl::BlbmConfig config;
    config.prior_variance = args.prior_variance;
    if (args.noise_variance > 0.0) config.noise_variance = args.noise_variance;
    const pbl::GaussianPosterior post = pbl::blbm_fit(data, map, config);
    fit = pbl::blbm_fit_artifact(map, post);
  } else if (args.method == "bnn") {
    pbl::MlpArchitecture arch;
    arch.input_dim = data.state_dim();
    arch.hidden = args.hidden;
    arch.output_dim = data.action_count;
    pbl::BnnTrainConfig config;
    config.learning_rate = args.learning_rate;
    config.epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.mc_samples = args.mc_samples;
    config.likelihood_variance = args.likelihood_variance;
    config.prior_std = args.prior_std;
    config.seed = args.seed;
    const pbl::BnnFitResult result = pbl::bnn_fit(data, arch, config);
    fit = pbl::bnn_fit_artifact(arch, result.params);
  } else if (args.method == "pevi") {
    const pbl::FeatureMap map =
        pbl::make_stage_map(basis, data.state_dim(), data.action_count, 1);
    const pbl::PeviModel model = pbl::pevi_fit(data, map, args.pevi_lambda,
                                               args.pevi_c, args.pevi_xi);
    fit = pbl::pevi_fit_artifact(map, model);
  } else {
    throw std::invalid_argument("fit: unknown method " + args.method);
  }
  pbl::write_json_file(args.out, fit);
  std::cout << "wrote " << args.out << "\n";
  return kExitOk;
}

struct PolicyArgs {
  std::string fit;        // single-stage path: an existing fit artifact
  std::string data;       // multi-stage path: a trajectory CSV
  std::string kind = "pbl";
  std::string method = "pbl_bnn";  // multi-stage fitting method
  double alpha = 0.1;
  int num_samples = 10000;
  std::uint64_t seed = 0;
  std::string out = "policy.json";
  std::string basis = "rff";
  int num_features = 100;
  double bandwidth = 1.0;
  std::uint64_t basis_seed = 0;
  double pevi_c = 1.0;
  double pevi_xi = 0.1;
  double pevi_lambda = 1.0;
};

int cmd_policy(const PolicyArgs& args) {
  if (!args.fit.empty()) {
    const Json fit = pbl::read_json_file(args.fit);
    const Json artifact = pbl::policy_artifact(args.kind, fit, args.alpha,
                                               args.num_samples, args.seed);
    pbl::load_policy(artifact);  // validates before writing
    pbl::write_json_file(args.out, artifact);
    std::cout << "wrote " << args.out << "\n";
    return kExitOk;
  }
  if (args.data.empty())
    throw std::invalid_argument("policy: need --fit or --data");

  const pbl::TrajectoryDataset data = pbl::read_trajectories_csv(args.data);
  pbl::BasisConfig basis;
  basis.kind =
      args.basis == "identity" ? pbl::BasisKind::kIdentity : pbl::BasisKind::kRff;
  basis.num_features = args.num_features;
  basis.bandwidth = args.bandwidth;
  basis.seed = args.basis_seed;

  std::vector<Json> stage_artifacts;
  if (args.method == "pevi") {
    const double stage_alpha = 0.0;
    pbl::Vector rewards = data.terminal_rewards;
    // Refit per stage so each stage artifact can be persisted standalone.
    for (int stage = data.stages(); stage >= 1; --stage) {
      pbl::Dataset stage_data;
      stage_data.action_count = data.action_count;
      stage_data.states = data.histories(stage);
      stage_data.actions = data.actions[stage - 1];
      stage_data.rewards = rewards;
      const pbl::FeatureMap map = pbl::make_stage_map(
          basis, static_cast<int>(stage_data.states.cols()),
          data.action_count, stage);
      const pbl::PeviModel model = pbl::pevi_fit(
          stage_data, map, args.pevi_lambda, args.pevi_c, args.pevi_xi);
      stage_artifacts.insert(
          stage_artifacts.begin(),
          pbl::policy_artifact("pevi", pbl::pevi_fit_artifact(map, model),
                               stage_alpha, 0, 0));
      if (stage > 1) {
        const pbl::Policy policy = pbl::pevi_policy(model, map);
        rewards = policy.batch_scores(data.histories(stage))
                      .rowwise()
                      .maxCoeff();
      }
    }
  } else {
    pbl::DtrConfig dtr;
    dtr.pessimistic = args.method.rfind("pbl_", 0) == 0;
    dtr.num_posterior_samples = args.num_samples;
    dtr.seed = args.seed;
    dtr.basis = basis;
    const pbl::ModelFamily family =
        args.method.find("blbm") != std::string::npos ? pbl::ModelFamily::kBlbm
                                                      : pbl::ModelFamily::kBnn;
    // The stage artifacts are rebuilt by refitting inside backward
    // induction; persist the per-stage posteriors.
    const double stage_alpha = args.alpha / data.stages();
    pbl::Vector rewards = data.terminal_rewards;
    for (int stage = data.stages(); stage >= 1; --stage) {
      pbl::Dataset stage_data;
      stage_data.action_count = data.action_count;
      stage_data.states = data.histories(stage);
      stage_data.actions = data.actions[stage - 1];
      stage_data.rewards = rewards;
      Json fit;
      pbl::StageBound bound;
      bound.action_count = data.action_count;
      if (family == pbl::ModelFamily::kBlbm) {
        const pbl::FeatureMap map = pbl::make_stage_map(
            basis, static_cast<int>(stage_data.states.cols()),
            data.action_count, stage);
        pbl::GaussianPosterior post =
            pbl::blbm_fit(stage_data, map, pbl::BlbmConfig{});
        fit = pbl::blbm_fit_artifact(map, post);
        bound.batch = pbl::blbm_bound_batch(
            std::move(post), map, dtr.pessimistic ? stage_alpha : 0.0);
      } else {
        pbl::MlpArchitecture arch;
        arch.input_dim = static_cast<int>(stage_data.states.cols());
        arch.hidden = dtr.hidden;
        arch.output_dim = data.action_count;
        pbl::BnnTrainConfig bnn_cfg = dtr.bnn;
        bnn_cfg.seed = pbl::derive_seed(
            args.seed, {static_cast<std::uint64_t>(stage), 1});
        pbl::BnnFitResult result = pbl::bnn_fit(stage_data, arch, bnn_cfg);
        fit = pbl::bnn_fit_artifact(arch, result.params);
        if (dtr.pessimistic) {
          auto model = std::make_shared<const pbl::MlpQModel>(arch);
          auto lb = std::make_shared<const pbl::LowerBoundFn>(
              model, std::move(result.posterior), stage_alpha,
              args.num_samples,
              pbl::RandomSeed{pbl::derive_seed(
                  args.seed, {static_cast<std::uint64_t>(stage), 2})});
          bound.batch = [lb](const pbl::Matrix& states) {
            return lb->evaluate_batch(states);
          };
        } else {
          const pbl::MlpArchitecture arch_copy = arch;
          const pbl::Vector mean = result.params.mu;
          bound.batch = [arch_copy, mean](const pbl::Matrix& states) {
            return pbl::mlp_forward_batch(arch_copy, mean, states);
          };
        }
      }
      const std::string stage_kind = dtr.pessimistic ? "pbl" : "nonpessi";
      stage_artifacts.insert(
          stage_artifacts.begin(),
          pbl::policy_artifact(
              stage_kind, fit, dtr.pessimistic ? stage_alpha : 0.0,
              args.num_samples,
              pbl::derive_seed(args.seed,
                               {static_cast<std::uint64_t>(stage), 2})));
      if (stage > 1)
        rewards = bound.batch(data.histories(stage)).rowwise().maxCoeff();
    }
  }
  const Json artifact = pbl::stage_policy_artifact(stage_artifacts);
  pbl::load_stage_policies(artifact);  // validates before writing
  pbl::write_json_file(args.out, artifact);
  std::cout << "wrote " << args.out << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string policy;
  std::string mode = "regret";
  std::string env_json;
  std::string data;
  int mc_states = 5000;
  std::uint64_t seed = 1;
  std::string out = "report.csv";
};

int cmd_evaluate(const EvaluateArgs& args) {
  const Json artifact = pbl::read_json_file(args.policy);
  const bool is_dtr = artifact.at("kind").get<std::string>() == "dtr";

  double value = 0.0;
  if (args.mode == "regret") {
    if (args.env_json.empty())
      throw std::invalid_argument("evaluate: regret mode needs --env-json");
    Json env = pbl::read_json_file(args.env_json);
    if (env.contains("env")) env = env.at("env");
    const pbl::EnvSpec spec = pbl::env_spec_from_json(env);
    if (is_dtr) {
      value = pbl::regret(pbl::load_stage_policies(artifact), spec,
                          args.mc_states, pbl::RandomSeed{args.seed});
    } else {
      value = pbl::regret(pbl::load_policy(artifact), spec, args.mc_states,
                          pbl::RandomSeed{args.seed});
    }
  } else if (args.mode == "ope") {
    if (args.data.empty())
      throw std::invalid_argument("evaluate: ope mode needs --data");
    if (is_dtr) {
      value = pbl::ope_importance_sampling(
          pbl::read_trajectories_csv(args.data),
          pbl::load_stage_policies(artifact));
    } else {
      value = pbl::ope_importance_sampling(pbl::read_dataset_csv(args.data),
                                           pbl::load_policy(artifact));
    }
  } else {
    throw std::invalid_argument("evaluate: unknown mode " + args.mode);
  }

  std::string csv = "mode,policy,value\n";
  csv += args.mode + "," + args.policy + "," + pbl::format_double(value) + "\n";
  pbl::write_text_file(args.out, csv);
  std::cout << args.mode << " = " << pbl::format_double(value) << "\n";
  return kExitOk;
}

struct ExperimentArgs {
  std::string config;
  std::string out;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool overwrite = false;
};

int cmd_experiment(const ExperimentArgs& args) {
  pbl::ExperimentConfig config =
      pbl::experiment_config_from_json(pbl::read_json_file(args.config));
  if (!args.out.empty()) config.out_dir = args.out;
  if (args.workers > 0) config.workers = args.workers;
  if (args.seed_set) config.base_seed = args.seed;
  config.validate();

  const std::string digest = pbl::config_digest(config);
  const fs::path summary =
      fs::path(config.out_dir) / digest / config.method / "summary.json";
  if (!args.overwrite && fs::exists(summary)) {
    std::cout << "results already present at " << summary.string()
              << " (use --overwrite to recompute)\n";
    return kExitOk;
  }
  const pbl::ExperimentResult result = pbl::run_experiment(config);
  std::cout << "digest " << result.digest << "\n";
  for (const pbl::CellSummary& cell : result.cells) {
    std::cout << "  n=" << cell.n << " eps=" << cell.epsilon
              << " sigma=" << cell.sigma << "  mean regret "
              << cell.mean_regret << " (se " << cell.std_error << ")\n";
  }
  std::cout << "wrote " << result.directory << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string dir = "out";
  std::string out = "report_long.csv";
};

int cmd_report(const ReportArgs& args) {
  const int rows = pbl::write_long_report(args.dir, args.out);
  std::cout << "wrote " << args.out << " (" << rows << " rows)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pessimism-based Bayesian learning for offline bandits and "
               "dynamic treatment regimes"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--env", gen_args.kind,
                  "toy|single_linear|single_nonlinear|two_stage_linear|"
                  "two_stage_nonlinear");
  gen->add_option("--n", gen_args.n, "Sample size");
  gen->add_option("--seed", gen_args.seed, "Generation seed");
  gen->add_option("--epsilon", gen_args.epsilon, "Behavior greediness");
  gen->add_option("--sigma", gen_args.sigma, "Reward noise scale");
  gen->add_option("--structural-seed", gen_args.structural_seed,
                  "Seed fixing the transition matrices");
  gen->add_option("--behavior", gen_args.behavior,
                  "optimal_with_prob_epsilon|optimal_with_prob_one_minus_"
                  "epsilon");
  gen->add_option("--out", gen_args.out, "Output path prefix");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a model on a dataset CSV");
  fit->add_option("--data", fit_args.data, "Dataset CSV")->required();
  fit->add_option("--method", fit_args.method, "blbm|bnn|pevi");
  fit->add_option("--out", fit_args.out, "Fit artifact path");
  fit->add_option("--basis", fit_args.basis, "rff|identity");
  fit->add_option("--num-features", fit_args.num_features, "RFF features");
  fit->add_option("--bandwidth", fit_args.bandwidth, "RFF bandwidth");
  fit->add_option("--basis-seed", fit_args.basis_seed, "RFF seed");
  fit->add_option("--prior-variance", fit_args.prior_variance, "BLBM prior");
  fit->add_option("--noise-variance", fit_args.noise_variance,
                  "BLBM noise variance (<= 0: estimate)");
  fit->add_option("--pevi-c", fit_args.pevi_c, "PEVI c");
  fit->add_option("--pevi-xi", fit_args.pevi_xi, "PEVI xi");
  fit->add_option("--pevi-lambda", fit_args.pevi_lambda, "PEVI lambda");
  fit->add_option("--hidden", fit_args.hidden, "BNN hidden widths");
  fit->add_option("--learning-rate", fit_args.learning_rate, "BNN lr");
  fit->add_option("--epochs", fit_args.epochs, "BNN epochs");
  fit->add_option("--batch-size", fit_args.batch_size, "BNN batch size");
  fit->add_option("--mc-samples", fit_args.mc_samples, "BNN MC samples");
  fit->add_option("--likelihood-variance", fit_args.likelihood_variance,
                  "BNN likelihood variance");
  fit->add_option("--prior-std", fit_args.prior_std, "BNN prior std");
  fit->add_option("--seed", fit_args.seed, "Training seed");

  PolicyArgs policy_args;
  auto* policy = app.add_subcommand("policy", "Build a policy artifact");
  policy->add_option("--fit", policy_args.fit, "Fit artifact (single-stage)");
  policy->add_option("--data", policy_args.data,
                     "Trajectory CSV (multi-stage; fits internally)");
  policy->add_option("--kind", policy_args.kind, "pbl|nonpessi|pevi");
  policy->add_option("--method", policy_args.method,
                     "Multi-stage method: pbl_blbm|pbl_bnn|nonpessi_blbm|"
                     "nonpessi_bnn|pevi");
  policy->add_option("--alpha", policy_args.alpha, "Significance level");
  policy->add_option("--num-samples", policy_args.num_samples,
                     "Posterior draws N");
  policy->add_option("--seed", policy_args.seed, "Sampling seed");
  policy->add_option("--out", policy_args.out, "Policy artifact path");
  policy->add_option("--basis", policy_args.basis, "rff|identity");
  policy->add_option("--num-features", policy_args.num_features, "RFF size");
  policy->add_option("--bandwidth", policy_args.bandwidth, "RFF bandwidth");
  policy->add_option("--basis-seed", policy_args.basis_seed, "RFF seed");
  policy->add_option("--pevi-c", policy_args.pevi_c, "PEVI c");
  policy->add_option("--pevi-xi", policy_args.pevi_xi, "PEVI xi");
  policy->add_option("--pevi-lambda", policy_args.pevi_lambda, "PEVI lambda");

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a policy");
  evaluate->add_option("--policy", eval_args.policy, "Policy artifact")
      ->required();
  evaluate->add_option("--mode", eval_args.mode, "regret|ope");
  evaluate->add_option("--env-json", eval_args.env_json,
                       "Env spec JSON (or dataset sidecar)");
  evaluate->add_option("--data", eval_args.data, "Dataset CSV (ope mode)");
  evaluate->add_option("--mc-states", eval_args.mc_states, "Oracle draws");
  evaluate->add_option("--seed", eval_args.seed, "Evaluation seed");
  evaluate->add_option("--out", eval_args.out, "Report CSV path");

  ExperimentArgs exp_args;
  auto* experiment =
      app.add_subcommand("experiment", "Run a factorial experiment");
  experiment->add_option("--config", exp_args.config, "Config JSON")
      ->required();
  experiment->add_option("--out", exp_args.out, "Output directory override");
  experiment->add_option("--workers", exp_args.workers, "Worker threads");
  experiment
      ->add_option("--seed", exp_args.seed, "Base seed override")
      ->each([&exp_args](const std::string&) { exp_args.seed_set = true; });
  experiment->add_flag("--overwrite", exp_args.overwrite,
                       "Recompute even if results exist");

  ReportArgs report_args;
  auto* report =
      app.add_subcommand("report", "Aggregate cell CSVs into one long CSV");
  report->add_option("--dir", report_args.dir, "Results root");
  report->add_option("--out", report_args.out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (fit->parsed()) return cmd_fit(fit_args);
    if (policy->parsed()) return cmd_policy(policy_args);
    if (evaluate->parsed()) return cmd_evaluate(eval_args);
    if (experiment->parsed()) return cmd_experiment(exp_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
