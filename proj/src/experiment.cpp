#include "pbl/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

namespace pbl {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  env.validate();
  static const char* kMethods[] = {"pbl_blbm", "pbl_bnn", "pevi",
                                   "nonpessi_blbm", "nonpessi_bnn"};
  if (std::find(std::begin(kMethods), std::end(kMethods), method) ==
      std::end(kMethods))
    throw std::invalid_argument("config: unknown method " + method);
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("config: alpha must be in (0,1)");
  if (blbm_solver != "monte_carlo" && blbm_solver != "closed_form")
    throw std::invalid_argument("config: unknown blbm_solver " + blbm_solver);
  if (replications < 1)
    throw std::invalid_argument("config: replications must be >= 1");
  if (n_list.empty() || epsilon_list.empty() || sigma_list.empty())
    throw std::invalid_argument("config: empty factorial axis");
  for (int n : n_list)
    if (n < 1) throw std::invalid_argument("config: n must be >= 1");
  for (double e : epsilon_list)
    if (!(e >= 0.0 && e <= 1.0))
      throw std::invalid_argument("config: epsilon must be in [0,1]");
  for (double s : sigma_list)
    if (!(s >= 0.0))
      throw std::invalid_argument("config: sigma must be >= 0");
  if (mc_states < 1)
    throw std::invalid_argument("config: mc_states must be >= 1");
  if (workers < 1)
    throw std::invalid_argument("config: workers must be >= 1");
  if (num_posterior_samples < 1)
    throw std::invalid_argument("config: num_posterior_samples must be >= 1");
  bnn.validate();
}

double ExperimentConfig::alpha_or_c() const {
  return method == "pevi" ? pevi_c : alpha;
}

Json experiment_config_to_json(const ExperimentConfig& config) {
  Json j;
  j["env"] = env_spec_to_json(config.env);
  j["method"] = config.method;
  j["alpha"] = config.alpha;
  j["blbm_solver"] = config.blbm_solver;
  j["pevi_c"] = config.pevi_c;
  j["pevi_xi"] = config.pevi_xi;
  j["pevi_lambda"] = config.pevi_lambda;
  j["basis"] = {{"kind", config.basis.kind == BasisKind::kRff ? "rff"
                                                              : "identity"},
                {"num_features", config.basis.num_features},
                {"bandwidth", config.basis.bandwidth},
                {"seed", config.basis.seed}};
  j["hidden"] = config.hidden;
  j["bnn"] = {{"learning_rate", config.bnn.learning_rate},
              {"epochs", config.bnn.epochs},
              {"batch_size", config.bnn.batch_size},
              {"mc_samples", config.bnn.mc_samples},
              {"likelihood_variance", config.bnn.likelihood_variance},
              {"prior_std", config.bnn.prior_std}};
  j["num_posterior_samples"] = config.num_posterior_samples;
  j["cross_fit"] = config.cross_fit;
  j["n_list"] = config.n_list;
  j["epsilon_list"] = config.epsilon_list;
  j["sigma_list"] = config.sigma_list;
  j["replications"] = config.replications;
  j["base_seed"] = config.base_seed;
  j["mc_states"] = config.mc_states;
  j["out_dir"] = config.out_dir;
  j["workers"] = config.workers;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig config;
  config.env = env_spec_from_json(j.at("env"));
  if (j.contains("method")) config.method = j.at("method").get<std::string>();
  if (j.contains("alpha")) config.alpha = j.at("alpha").get<double>();
  if (j.contains("blbm_solver"))
    config.blbm_solver = j.at("blbm_solver").get<std::string>();
  if (j.contains("pevi_c")) config.pevi_c = j.at("pevi_c").get<double>();
  if (j.contains("pevi_xi")) config.pevi_xi = j.at("pevi_xi").get<double>();
  if (j.contains("pevi_lambda"))
    config.pevi_lambda = j.at("pevi_lambda").get<double>();
  if (j.contains("basis")) {
    const Json& b = j.at("basis");
    if (b.contains("kind"))
      config.basis.kind = b.at("kind").get<std::string>() == "identity"
                              ? BasisKind::kIdentity
                              : BasisKind::kRff;
    if (b.contains("num_features"))
      config.basis.num_features = b.at("num_features").get<int>();
    if (b.contains("bandwidth"))
      config.basis.bandwidth = b.at("bandwidth").get<double>();
    if (b.contains("seed"))
      config.basis.seed = b.at("seed").get<std::uint64_t>();
  }
  if (j.contains("hidden"))
    config.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("bnn")) {
    const Json& b = j.at("bnn");
    if (b.contains("learning_rate"))
      config.bnn.learning_rate = b.at("learning_rate").get<double>();
    if (b.contains("epochs")) config.bnn.epochs = b.at("epochs").get<int>();
    if (b.contains("batch_size"))
      config.bnn.batch_size = b.at("batch_size").get<int>();
    if (b.contains("mc_samples"))
      config.bnn.mc_samples = b.at("mc_samples").get<int>();
    if (b.contains("likelihood_variance"))
      config.bnn.likelihood_variance =
          b.at("likelihood_variance").get<double>();
    if (b.contains("prior_std"))
      config.bnn.prior_std = b.at("prior_std").get<double>();
  }
  if (j.contains("num_posterior_samples"))
    config.num_posterior_samples = j.at("num_posterior_samples").get<int>();
  if (j.contains("cross_fit"))
    config.cross_fit = j.at("cross_fit").get<bool>();
  if (j.contains("n_list"))
    config.n_list = j.at("n_list").get<std::vector<int>>();
  if (j.contains("epsilon_list"))
    config.epsilon_list = j.at("epsilon_list").get<std::vector<double>>();
  if (j.contains("sigma_list"))
    config.sigma_list = j.at("sigma_list").get<std::vector<double>>();
  if (j.contains("replications"))
    config.replications = j.at("replications").get<int>();
  if (j.contains("base_seed"))
    config.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("mc_states")) config.mc_states = j.at("mc_states").get<int>();
  if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("workers")) config.workers = j.at("workers").get<int>();
  config.validate();
  return config;
}

std::string config_digest(const ExperimentConfig& config) {
  Json j = experiment_config_to_json(config);
  j.erase("out_dir");
  j.erase("workers");
  return fnv1a_hex(j.dump());
}

std::uint64_t cell_seed(std::uint64_t base, int n_idx, int eps_idx,
                        int sigma_idx, int rep) {
  return derive_seed(base, {static_cast<std::uint64_t>(n_idx),
                            static_cast<std::uint64_t>(eps_idx),
                            static_cast<std::uint64_t>(sigma_idx),
                            static_cast<std::uint64_t>(rep)});
}

namespace {

DtrConfig dtr_config_from(const ExperimentConfig& config,
                          std::uint64_t fit_seed, bool pessimistic) {
  DtrConfig dtr;
  dtr.pessimistic = pessimistic;
  dtr.num_posterior_samples = config.num_posterior_samples;
  dtr.seed = fit_seed;
  dtr.cross_fit = config.cross_fit;
  dtr.basis = config.basis;
  dtr.hidden = config.hidden;
  dtr.bnn = config.bnn;
  return dtr;
}

}  // namespace

double run_replication(const ExperimentConfig& config, int n_idx, int eps_idx,
                       int sigma_idx, int rep) {
  const int n = config.n_list.at(n_idx);
  EnvSpec spec = config.env;
  spec.epsilon = config.epsilon_list.at(eps_idx);
  spec.noise_sigma = config.sigma_list.at(sigma_idx);

  const std::uint64_t rep_seed =
      cell_seed(config.base_seed, n_idx, eps_idx, sigma_idx, rep);
  const RandomSeed data_seed{derive_seed(rep_seed, {0})};
  const std::uint64_t fit_seed = derive_seed(rep_seed, {1});
  const RandomSeed bound_seed{derive_seed(rep_seed, {2})};
  const RandomSeed eval_seed{derive_seed(rep_seed, {3})};

  if (spec.stages() == 1) {
    const Dataset data = gen_dataset(spec, n, data_seed);
    Policy policy;
    if (config.method == "pbl_blbm") {
      const FeatureMap map = make_stage_map(config.basis, data.state_dim(),
                                            data.action_count, 1);
      GaussianPosterior post = blbm_fit(data, map, BlbmConfig{});
      if (config.blbm_solver == "monte_carlo") {
        auto model = std::make_shared<const LinearQModel>(map);
        auto lb = std::make_shared<const LowerBoundFn>(
            model, std::move(post), config.alpha,
            config.num_posterior_samples, bound_seed);
        policy = greedy_policy(lb);
      } else {
        policy.action_count = data.action_count;
        policy.batch_scores =
            blbm_bound_batch(std::move(post), map, config.alpha);
      }
    } else if (config.method == "pbl_bnn") {
      MlpArchitecture arch;
      arch.input_dim = data.state_dim();
      arch.hidden = config.hidden;
      arch.output_dim = data.action_count;
      BnnTrainConfig bnn_cfg = config.bnn;
      bnn_cfg.seed = fit_seed;
      BnnFitResult fit = bnn_fit(data, arch, bnn_cfg);
      auto model = std::make_shared<const MlpQModel>(arch);
      auto lb = std::make_shared<const LowerBoundFn>(
          model, std::move(fit.posterior), config.alpha,
          config.num_posterior_samples, bound_seed);
      policy = greedy_policy(lb);
    } else if (config.method == "pevi") {
      const FeatureMap map = make_stage_map(config.basis, data.state_dim(),
                                            data.action_count, 1);
      const PeviModel model = pevi_fit(data, map, config.pevi_lambda,
                                       config.pevi_c, config.pevi_xi);
      policy = pevi_policy(model, map);
    } else {  // nonpessi_blbm / nonpessi_bnn
      DtrConfig dtr = dtr_config_from(config, fit_seed, false);
      const ModelFamily family = config.method == "nonpessi_blbm"
                                     ? ModelFamily::kBlbm
                                     : ModelFamily::kBnn;
      policy = nonpessi_policy(family, data, dtr);
    }
    return regret(policy, spec, config.mc_states, eval_seed);
  }

  const TrajectoryDataset data = gen_trajectories(spec, n, data_seed);
  StagePolicySet set;
  if (config.method == "pevi") {
    set = pevi_policy_dtr(data, config.basis, config.pevi_lambda,
                          config.pevi_c, config.pevi_xi);
  } else {
    const bool pessimistic = config.method.rfind("pbl_", 0) == 0;
    const ModelFamily family = config.method.find("blbm") != std::string::npos
                                   ? ModelFamily::kBlbm
                                   : ModelFamily::kBnn;
    set = backward_induct(data, family, config.alpha,
                          dtr_config_from(config, fit_seed, pessimistic));
  }
  return regret(set, spec, config.mc_states, eval_seed);
}

namespace {

std::string trim_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return std::string(buf);
}

std::string cell_file_name(int n, double eps, double sigma) {
  return "n" + std::to_string(n) + "_eps" + trim_number(eps) + "_sigma" +
         trim_number(sigma) + ".csv";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::string digest = config_digest(config);
  const fs::path dir = fs::path(config.out_dir) / digest / config.method;

  // Fail on an unwritable output directory before any computation.
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory: " +
                             dir.string());
  {
    const fs::path probe = dir / ".probe";
    write_text_file(probe.string(), "ok");
    fs::remove(probe);
  }

  struct Cell {
    int n_idx, eps_idx, sigma_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t ni = 0; ni < config.n_list.size(); ++ni)
    for (std::size_t ei = 0; ei < config.epsilon_list.size(); ++ei)
      for (std::size_t si = 0; si < config.sigma_list.size(); ++si)
        cells.push_back({static_cast<int>(ni), static_cast<int>(ei),
                         static_cast<int>(si)});

  std::vector<std::vector<double>> regrets(
      cells.size(), std::vector<double>(config.replications, 0.0));

  struct Task {
    int cell;
    int rep;
  };
  std::vector<Task> tasks;
  tasks.reserve(cells.size() * config.replications);
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (int r = 0; r < config.replications; ++r)
      tasks.push_back({static_cast<int>(c), r});

  std::atomic<std::size_t> cursor{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    while (true) {
      const std::size_t idx = cursor.fetch_add(1);
      if (idx >= tasks.size()) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      const Task& task = tasks[idx];
      const Cell& cell = cells[static_cast<std::size_t>(task.cell)];
      try {
        regrets[static_cast<std::size_t>(task.cell)]
               [static_cast<std::size_t>(task.rep)] =
                   run_replication(config, cell.n_idx, cell.eps_idx,
                                   cell.sigma_idx, task.rep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  {
    std::vector<std::thread> pool;
    const int thread_count =
        std::max(1, std::min<int>(config.workers,
                                  static_cast<int>(tasks.size())));
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // Deterministic single-threaded reduction and output.
  ExperimentResult result;
  result.digest = digest;
  result.directory = dir.string();
  Json summary_cells = Json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const Cell& cell = cells[c];
    CellSummary summary;
    summary.n = config.n_list[static_cast<std::size_t>(cell.n_idx)];
    summary.epsilon =
        config.epsilon_list[static_cast<std::size_t>(cell.eps_idx)];
    summary.sigma = config.sigma_list[static_cast<std::size_t>(cell.sigma_idx)];
    summary.file = cell_file_name(summary.n, summary.epsilon, summary.sigma);

    RegretReport report;
    report.method = config.method;
    report.config_digest = digest;
    report.n = summary.n;
    report.epsilon = summary.epsilon;
    report.sigma = summary.sigma;
    report.alpha_or_c = config.alpha_or_c();
    report.regrets = regrets[c];
    summary.mean_regret = report.mean();
    summary.std_error = report.std_error();

    std::ostringstream csv;
    csv << "method,config_digest,n,epsilon,sigma,alpha_or_c,replication,seed,"
           "regret\n";
    for (int r = 0; r < config.replications; ++r) {
      csv << config.method << ',' << digest << ',' << summary.n << ','
          << format_double(summary.epsilon) << ','
          << format_double(summary.sigma) << ','
          << format_double(report.alpha_or_c) << ',' << r << ','
          << cell_seed(config.base_seed, cell.n_idx, cell.eps_idx,
                       cell.sigma_idx, r)
          << ',' << format_double(report.regrets[static_cast<std::size_t>(r)])
          << "\n";
    }
    write_text_file((dir / summary.file).string(), csv.str());

    Json jc;
    jc["n"] = summary.n;
    jc["epsilon"] = summary.epsilon;
    jc["sigma"] = summary.sigma;
    jc["mean_regret"] = summary.mean_regret;
    jc["std_error"] = summary.std_error;
    jc["replications"] = config.replications;
    jc["file"] = summary.file;
    summary_cells.push_back(jc);

    summary.report = std::move(report);
    result.cells.push_back(std::move(summary));
  }

  Json summary;
  summary["schema"] = "pbl-summary-v1";
  summary["digest"] = digest;
  Json canonical = experiment_config_to_json(config);
  canonical.erase("out_dir");
  canonical.erase("workers");
  summary["config"] = canonical;
  summary["cells"] = summary_cells;
  write_json_file((dir / "summary.json").string(), summary);
  return result;
}

int write_long_report(const std::string& root, const std::string& out_path) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() == ".csv" && p.filename().string().rfind("n", 0) == 0)
      files.push_back(p);
  }
  std::sort(files.begin(), files.end());

  std::ostringstream out;
  out << "method,config_digest,n,epsilon,sigma,alpha_or_c,replication,seed,"
         "regret\n";
  int rows = 0;
  for (const fs::path& file : files) {
    std::istringstream in(read_text_file(file.string()));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (line.empty()) continue;
      out << line << "\n";
      ++rows;
    }
  }
  write_text_file(out_path, out.str());
  return rows;
}

}  // namespace pbl
