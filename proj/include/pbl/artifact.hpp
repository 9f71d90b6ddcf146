#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "pbl/baselines.hpp"
#include "pbl/bnn.hpp"
#include "pbl/dataset.hpp"
#include "pbl/dtr.hpp"
#include "pbl/envs.hpp"

namespace pbl {

using Json = nlohmann::json;

// 64-bit FNV-1a, hex encoded; used for config digests and file checksums.
std::string fnv1a_hex(const std::string& bytes);

std::string format_double(double value);  // 17 significant digits

Json env_spec_to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const Json& j);

Json feature_map_to_json(const FeatureMap& map);
FeatureMap feature_map_from_json(const Json& j);

Json posterior_to_json(const GaussianPosterior& post);
GaussianPosterior posterior_from_json(const Json& j);

Json architecture_to_json(const MlpArchitecture& arch);
MlpArchitecture architecture_from_json(const Json& j);

/// Columnar CSV plus JSON sidecar carrying the generating spec and the
/// digest of the CSV bytes; numbers use 17 significant digits so the
/// round-trip is bit exact.
void write_dataset_csv(const Dataset& data, const std::string& csv_path);
Dataset read_dataset_csv(const std::string& csv_path);
void write_trajectories_csv(const TrajectoryDataset& data,
                            const std::string& csv_path);
TrajectoryDataset read_trajectories_csv(const std::string& csv_path);

void write_dataset_sidecar(const EnvSpec& spec, int n, std::uint64_t seed,
                           const std::string& csv_path,
                           const std::string& sidecar_path);

// Fit artifacts -------------------------------------------------------------

Json blbm_fit_artifact(const FeatureMap& map, const GaussianPosterior& post);
Json bnn_fit_artifact(const MlpArchitecture& arch,
                      const VariationalParams& params);
Json pevi_fit_artifact(const FeatureMap& map, const PeviModel& model);

// Policy artifacts ----------------------------------------------------------

/// kind: "pbl" (pessimistic greedy), "nonpessi" (posterior-mean greedy) or
/// "pevi". alpha/num_samples/seed matter only for "pbl"; the accepted
/// sample cache is reproducible from the seed and is not persisted.
Json policy_artifact(const std::string& kind, const Json& fit, double alpha,
                     int num_samples, std::uint64_t seed);

Json stage_policy_artifact(const std::vector<Json>& stage_policies);

Policy load_policy(const Json& artifact);
StagePolicySet load_stage_policies(const Json& artifact);

// Small file helpers.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace pbl
