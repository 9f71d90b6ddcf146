#include "pbl/artifact.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace pbl {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf);
}

namespace {

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix();
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < cols; ++k)
      m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

std::string env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kToy: return "toy";
    case EnvKind::kSingleLinear: return "single_linear";
    case EnvKind::kSingleNonlinear: return "single_nonlinear";
    case EnvKind::kTwoStageLinear: return "two_stage_linear";
    case EnvKind::kTwoStageNonlinear: return "two_stage_nonlinear";
  }
  throw std::invalid_argument("unknown env kind");
}

EnvKind env_kind_from_name(const std::string& name) {
  if (name == "toy") return EnvKind::kToy;
  if (name == "single_linear") return EnvKind::kSingleLinear;
  if (name == "single_nonlinear") return EnvKind::kSingleNonlinear;
  if (name == "two_stage_linear") return EnvKind::kTwoStageLinear;
  if (name == "two_stage_nonlinear") return EnvKind::kTwoStageNonlinear;
  throw std::invalid_argument("unknown env kind: " + name);
}

}  // namespace

Json env_spec_to_json(const EnvSpec& spec) {
  Json j;
  j["kind"] = env_kind_name(spec.kind);
  j["noise_sigma"] = spec.noise_sigma;
  j["epsilon"] = spec.epsilon;
  j["structural_seed"] = spec.structural_seed;
  j["behavior_convention"] =
      spec.behavior == BehaviorConvention::kOptimalWithProbEpsilon
          ? "optimal_with_prob_epsilon"
          : "optimal_with_prob_one_minus_epsilon";
  return j;
}

EnvSpec env_spec_from_json(const Json& j) {
  EnvSpec spec;
  spec.kind = env_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("noise_sigma"))
    spec.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("epsilon")) spec.epsilon = j.at("epsilon").get<double>();
  if (j.contains("structural_seed"))
    spec.structural_seed = j.at("structural_seed").get<std::uint64_t>();
  if (j.contains("behavior_convention")) {
    const std::string b = j.at("behavior_convention").get<std::string>();
    if (b == "optimal_with_prob_epsilon") {
      spec.behavior = BehaviorConvention::kOptimalWithProbEpsilon;
    } else if (b == "optimal_with_prob_one_minus_epsilon") {
      spec.behavior = BehaviorConvention::kOptimalWithProbOneMinusEpsilon;
    } else {
      throw std::invalid_argument("unknown behavior convention: " + b);
    }
  }
  spec.validate();
  return spec;
}

Json feature_map_to_json(const FeatureMap& map) {
  Json j;
  j["kind"] = map.kind == BasisKind::kRff ? "rff" : "identity";
  j["input_dim"] = map.input_dim;
  j["num_features"] = map.num_features;
  j["bandwidth"] = map.bandwidth;
  j["action_count"] = map.action_count;
  if (map.kind == BasisKind::kRff) {
    j["frequencies"] = matrix_to_json(map.frequencies);
    j["offsets"] = vector_to_json(map.offsets);
  }
  return j;
}

FeatureMap feature_map_from_json(const Json& j) {
  FeatureMap map;
  const std::string kind = j.at("kind").get<std::string>();
  map.kind = kind == "rff" ? BasisKind::kRff : BasisKind::kIdentity;
  map.input_dim = j.at("input_dim").get<int>();
  map.num_features = j.at("num_features").get<int>();
  map.bandwidth = j.at("bandwidth").get<double>();
  map.action_count = j.at("action_count").get<int>();
  if (map.kind == BasisKind::kRff) {
    map.frequencies = matrix_from_json(j.at("frequencies"));
    map.offsets = vector_from_json(j.at("offsets"));
    if (map.frequencies.rows() != map.num_features ||
        map.frequencies.cols() != map.input_dim ||
        map.offsets.size() != map.num_features)
      throw std::invalid_argument("feature map artifact is inconsistent");
  }
  return map;
}

Json posterior_to_json(const GaussianPosterior& post) {
  Json j;
  j["mean"] = vector_to_json(post.mean());
  if (post.is_diagonal()) {
    j["var_diag"] = vector_to_json(post.var_diag());
  } else {
    j["cov"] = matrix_to_json(post.cov());
  }
  return j;
}

GaussianPosterior posterior_from_json(const Json& j) {
  Vector mean = vector_from_json(j.at("mean"));
  if (j.contains("var_diag"))
    return GaussianPosterior::diagonal(std::move(mean),
                                       vector_from_json(j.at("var_diag")));
  return GaussianPosterior::dense(std::move(mean),
                                  matrix_from_json(j.at("cov")));
}

Json architecture_to_json(const MlpArchitecture& arch) {
  Json j;
  j["input_dim"] = arch.input_dim;
  j["hidden"] = arch.hidden;
  j["output_dim"] = arch.output_dim;
  return j;
}

MlpArchitecture architecture_from_json(const Json& j) {
  MlpArchitecture arch;
  arch.input_dim = j.at("input_dim").get<int>();
  arch.hidden = j.at("hidden").get<std::vector<int>>();
  arch.output_dim = j.at("output_dim").get<int>();
  arch.validate();
  return arch;
}

// CSV ------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

void write_dataset_csv(const Dataset& data, const std::string& csv_path) {
  data.validate();
  std::ostringstream out;
  for (int j = 0; j < data.state_dim(); ++j) out << "s_" << j << ",";
  out << "action,reward";
  if (data.has_propensities()) out << ",propensity";
  out << "\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.state_dim(); ++j)
      out << format_double(data.states(i, j)) << ",";
    out << data.actions(i) << "," << format_double(data.rewards(i));
    if (data.has_propensities())
      out << "," << format_double(data.propensities(i));
    out << "\n";
  }
  write_text_file(csv_path, out.str());
}

Dataset read_dataset_csv(const std::string& csv_path) {
  std::istringstream in(read_text_file(csv_path));
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_dataset_csv: empty file " + csv_path);
  const std::vector<std::string> header = split_csv_line(line);

  int state_cols = 0, action_col = -1, reward_col = -1, prop_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].rfind("s_", 0) == 0) ++state_cols;
    else if (header[c] == "action") action_col = static_cast<int>(c);
    else if (header[c] == "reward") reward_col = static_cast<int>(c);
    else if (header[c] == "propensity") prop_col = static_cast<int>(c);
  }
  if (state_cols == 0 || action_col < 0 || reward_col < 0)
    throw std::runtime_error("read_dataset_csv: malformed header");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  Dataset data;
  const int n = static_cast<int>(rows.size());
  data.states.resize(n, state_cols);
  data.actions.resize(n);
  data.rewards.resize(n);
  if (prop_col >= 0) data.propensities.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (r.size() != header.size())
      throw std::runtime_error("read_dataset_csv: ragged row");
    for (int j = 0; j < state_cols; ++j)
      data.states(i, j) = std::stod(r[static_cast<std::size_t>(j)]);
    data.actions(i) = std::stoi(r[static_cast<std::size_t>(action_col)]);
    data.rewards(i) = std::stod(r[static_cast<std::size_t>(reward_col)]);
    if (prop_col >= 0)
      data.propensities(i) = std::stod(r[static_cast<std::size_t>(prop_col)]);
  }
  int max_action = 1;
  for (int i = 0; i < n; ++i) max_action = std::max(max_action, data.actions(i));
  data.action_count = std::max(2, max_action + 1);
  return data;
}

void write_trajectories_csv(const TrajectoryDataset& data,
                            const std::string& csv_path) {
  data.validate();
  std::ostringstream out;
  for (int t = 1; t <= data.stages(); ++t) {
    for (int j = 0; j < data.state_dim(t); ++j)
      out << "t" << t << "_s_" << j << ",";
    out << "t" << t << "_action,";
    if (data.has_propensities()) out << "t" << t << "_propensity,";
  }
  out << "reward\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int t = 1; t <= data.stages(); ++t) {
      for (int j = 0; j < data.state_dim(t); ++j)
        out << format_double(data.states[t - 1](i, j)) << ",";
      out << data.actions[t - 1](i) << ",";
      if (data.has_propensities())
        out << format_double(data.propensities[t - 1](i)) << ",";
    }
    out << format_double(data.terminal_rewards(i)) << "\n";
  }
  write_text_file(csv_path, out.str());
}

TrajectoryDataset read_trajectories_csv(const std::string& csv_path) {
  std::istringstream in(read_text_file(csv_path));
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_trajectories_csv: empty file " + csv_path);
  const std::vector<std::string> header = split_csv_line(line);

  // Infer the per-stage layout from the header names.
  int stages = 0;
  bool has_prop = false;
  std::vector<int> state_dims;
  for (const std::string& h : header) {
    if (h.rfind("t", 0) != 0) continue;
    const std::size_t underscore = h.find('_');
    if (underscore == std::string::npos) continue;
    const int t = std::stoi(h.substr(1, underscore - 1));
    stages = std::max(stages, t);
    if (static_cast<int>(state_dims.size()) < t) state_dims.resize(t, 0);
    if (h.find("_s_") != std::string::npos) ++state_dims[t - 1];
    if (h.find("_propensity") != std::string::npos) has_prop = true;
  }
  if (stages == 0)
    throw std::runtime_error("read_trajectories_csv: malformed header");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  const int n = static_cast<int>(rows.size());
  TrajectoryDataset data;
  data.states.resize(stages);
  data.actions.resize(stages);
  if (has_prop) data.propensities.resize(stages);
  for (int t = 0; t < stages; ++t) {
    data.states[t].resize(n, state_dims[t]);
    data.actions[t].resize(n);
    if (has_prop) data.propensities[t].resize(n);
  }
  data.terminal_rewards.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (r.size() != header.size())
      throw std::runtime_error("read_trajectories_csv: ragged row");
    std::size_t c = 0;
    for (int t = 0; t < stages; ++t) {
      for (int j = 0; j < state_dims[t]; ++j)
        data.states[t](i, j) = std::stod(r[c++]);
      data.actions[t](i) = std::stoi(r[c++]);
      if (has_prop) data.propensities[t](i) = std::stod(r[c++]);
    }
    data.terminal_rewards(i) = std::stod(r[c]);
  }
  int max_action = 1;
  for (int t = 0; t < stages; ++t)
    for (int i = 0; i < n; ++i)
      max_action = std::max(max_action, data.actions[t](i));
  data.action_count = std::max(2, max_action + 1);
  return data;
}

void write_dataset_sidecar(const EnvSpec& spec, int n, std::uint64_t seed,
                           const std::string& csv_path,
                           const std::string& sidecar_path) {
  Json j;
  j["schema"] = "pbl-data-v1";
  j["env"] = env_spec_to_json(spec);
  j["n"] = n;
  j["seed"] = seed;
  j["csv_digest"] = fnv1a_hex(read_text_file(csv_path));
  write_json_file(sidecar_path, j);
}

// Fit and policy artifacts ---------------------------------------------------

Json blbm_fit_artifact(const FeatureMap& map, const GaussianPosterior& post) {
  Json j;
  j["schema"] = "pbl-fit-v1";
  j["method"] = "blbm";
  j["feature_map"] = feature_map_to_json(map);
  j["posterior"] = posterior_to_json(post);
  return j;
}

Json bnn_fit_artifact(const MlpArchitecture& arch,
                      const VariationalParams& params) {
  Json j;
  j["schema"] = "pbl-fit-v1";
  j["method"] = "bnn";
  j["arch"] = architecture_to_json(arch);
  j["mu"] = vector_to_json(params.mu);
  j["rho"] = vector_to_json(params.rho);
  return j;
}

Json pevi_fit_artifact(const FeatureMap& map, const PeviModel& model) {
  Json j;
  j["schema"] = "pbl-fit-v1";
  j["method"] = "pevi";
  j["feature_map"] = feature_map_to_json(map);
  j["ridge_weights"] = vector_to_json(model.ridge_weights);
  j["lambda_inv"] = matrix_to_json(model.lambda_inv);
  j["c"] = model.c;
  j["xi"] = model.xi;
  j["lambda"] = model.lambda;
  j["n"] = model.n;
  return j;
}

Json policy_artifact(const std::string& kind, const Json& fit, double alpha,
                     int num_samples, std::uint64_t seed) {
  if (kind != "pbl" && kind != "nonpessi" && kind != "pevi")
    throw std::invalid_argument("policy_artifact: unknown kind " + kind);
  Json j;
  j["schema"] = "pbl-policy-v1";
  j["kind"] = kind;
  j["fit"] = fit;
  j["alpha"] = alpha;
  j["num_samples"] = num_samples;
  j["seed"] = seed;
  return j;
}

Json stage_policy_artifact(const std::vector<Json>& stage_policies) {
  Json j;
  j["schema"] = "pbl-policy-v1";
  j["kind"] = "dtr";
  j["stages"] = stage_policies;
  return j;
}

namespace {

PeviModel pevi_model_from_artifact(const Json& fit) {
  PeviModel model;
  model.ridge_weights = vector_from_json(fit.at("ridge_weights"));
  model.lambda_inv = matrix_from_json(fit.at("lambda_inv"));
  model.c = fit.at("c").get<double>();
  model.xi = fit.at("xi").get<double>();
  model.lambda = fit.at("lambda").get<double>();
  model.n = fit.at("n").get<int>();
  model.feature_dim = static_cast<int>(model.ridge_weights.size());
  return model;
}

}  // namespace

Policy load_policy(const Json& artifact) {
  const std::string kind = artifact.at("kind").get<std::string>();
  const Json& fit = artifact.at("fit");
  const std::string method = fit.at("method").get<std::string>();

  if (method == "pevi") {
    const FeatureMap map = feature_map_from_json(fit.at("feature_map"));
    return pevi_policy(pevi_model_from_artifact(fit), map);
  }
  if (method == "blbm") {
    FeatureMap map = feature_map_from_json(fit.at("feature_map"));
    GaussianPosterior post = posterior_from_json(fit.at("posterior"));
    const double alpha =
        kind == "pbl" ? artifact.at("alpha").get<double>() : 0.0;
    Policy policy;
    policy.action_count = map.action_count;
    policy.batch_scores = blbm_bound_batch(std::move(post), std::move(map), alpha);
    return policy;
  }
  if (method == "bnn") {
    const MlpArchitecture arch = architecture_from_json(fit.at("arch"));
    const Vector mu = vector_from_json(fit.at("mu"));
    const Vector rho = vector_from_json(fit.at("rho"));
    if (kind == "pbl") {
      Vector variances(rho.size());
      for (Eigen::Index i = 0; i < rho.size(); ++i) {
        const double sd = softplus(rho(i));
        variances(i) = sd * sd;
      }
      auto model = std::make_shared<const MlpQModel>(arch);
      auto lb = std::make_shared<const LowerBoundFn>(
          model, GaussianPosterior::diagonal(mu, variances),
          artifact.at("alpha").get<double>(),
          artifact.at("num_samples").get<int>(),
          RandomSeed{artifact.at("seed").get<std::uint64_t>()});
      return greedy_policy(lb);
    }
    Policy policy;
    policy.action_count = arch.output_dim;
    policy.batch_scores = [arch, mu](const Matrix& states) {
      return mlp_forward_batch(arch, mu, states);
    };
    return policy;
  }
  throw std::invalid_argument("load_policy: unknown fit method " + method);
}

StagePolicySet load_stage_policies(const Json& artifact) {
  if (artifact.at("kind").get<std::string>() != "dtr")
    throw std::invalid_argument("load_stage_policies: not a dtr artifact");
  const Json& stages = artifact.at("stages");
  StagePolicySet set;
  for (const Json& stage_artifact : stages) {
    Policy policy = load_policy(stage_artifact);
    const Json& fit = stage_artifact.at("fit");
    int input_dim = 0;
    if (fit.contains("feature_map"))
      input_dim = fit.at("feature_map").at("input_dim").get<int>();
    else
      input_dim = fit.at("arch").at("input_dim").get<int>();
    StageBound bound;
    bound.action_count = policy.action_count;
    bound.batch = policy.batch_scores;
    set.bounds.push_back(bound);
    set.history_dims.push_back(input_dim);
    set.stage_alphas.push_back(stage_artifact.at("alpha").get<double>());
    set.action_count = policy.action_count;
    set.policies.push_back(std::move(policy));
  }
  return set;
}

// File helpers ----------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json read_json_file(const std::string& path) {
  return Json::parse(read_text_file(path));
}

void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace pbl
