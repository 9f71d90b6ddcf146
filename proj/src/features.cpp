#include "pbl/features.hpp"

#include <cmath>

namespace pbl {

FeatureMap make_feature_map(int input_dim, int num_features, double bandwidth,
                            int action_count, RandomSeed seed) {
  if (input_dim < 1 || num_features < 1 || action_count < 1)
    throw std::invalid_argument("make_feature_map: dimensions must be >= 1");
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("make_feature_map: bandwidth must be > 0");

  FeatureMap map;
  map.kind = BasisKind::kRff;
  map.input_dim = input_dim;
  map.num_features = num_features;
  map.bandwidth = bandwidth;
  map.action_count = action_count;

  // Frequencies W_jk ~ N(0, 2*bandwidth), offsets b_j ~ U[0, 2*pi).
  Rng rng(seed);
  const double freq_std = std::sqrt(2.0 * bandwidth);
  map.frequencies.resize(num_features, input_dim);
  for (int j = 0; j < num_features; ++j)
    for (int k = 0; k < input_dim; ++k)
      map.frequencies(j, k) = freq_std * rng.normal();
  map.offsets.resize(num_features);
  for (int j = 0; j < num_features; ++j)
    map.offsets(j) = rng.uniform(0.0, 2.0 * M_PI);
  return map;
}

FeatureMap make_identity_map(int input_dim, int action_count) {
  if (input_dim < 1 || action_count < 1)
    throw std::invalid_argument("make_identity_map: dimensions must be >= 1");
  FeatureMap map;
  map.kind = BasisKind::kIdentity;
  map.input_dim = input_dim;
  map.num_features = input_dim;
  map.bandwidth = 0.0;
  map.action_count = action_count;
  return map;
}

Vector encode_state(const FeatureMap& map, const Vector& s) {
  if (s.size() != map.input_dim)
    throw std::invalid_argument("encode_state: state dimension mismatch");
  if (map.kind == BasisKind::kIdentity) return s;
  const double scale = std::sqrt(2.0 / map.num_features);
  return (((map.frequencies * s) + map.offsets).array().cos() * scale)
      .matrix();
}

Matrix encode_states(const FeatureMap& map, const Matrix& states) {
  if (states.cols() != map.input_dim)
    throw std::invalid_argument("encode_states: state dimension mismatch");
  if (map.kind == BasisKind::kIdentity) return states;
  const double scale = std::sqrt(2.0 / map.num_features);
  Matrix z = states * map.frequencies.transpose();
  z.rowwise() += map.offsets.transpose();
  return (z.array().cos() * scale).matrix();
}

Vector encode_state_action(const FeatureMap& map, const Vector& s,
                           int action) {
  if (action < 0 || action >= map.action_count)
    throw std::invalid_argument("encode_state_action: action out of range");
  Vector joint = Vector::Zero(map.joint_dim());
  joint.segment(static_cast<Eigen::Index>(action) * map.num_features,
                map.num_features) = encode_state(map, s);
  return joint;
}

}  // namespace pbl
