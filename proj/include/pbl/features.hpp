#pragma once

#include "pbl/numerics.hpp"

namespace pbl {

enum class BasisKind { kRff, kIdentity };

/// Random Fourier feature basis for the Gaussian kernel
/// exp(-bandwidth * |x - y|^2), together with the per-action block layout
/// used to encode state-action pairs. Frequencies and offsets are drawn
/// once at construction and never change. With kIdentity the basis is the
/// raw state (num_features == input_dim), for exactly linear models.
struct FeatureMap {
  BasisKind kind = BasisKind::kRff;
  int input_dim = 0;
  int num_features = 0;
  double bandwidth = 1.0;
  int action_count = 0;
  Matrix frequencies;  // num_features x input_dim
  Vector offsets;      // num_features, in [0, 2*pi)

  int state_dim() const { return num_features; }
  int joint_dim() const { return num_features * action_count; }
};

FeatureMap make_feature_map(int input_dim, int num_features, double bandwidth,
                            int action_count, RandomSeed seed);

FeatureMap make_identity_map(int input_dim, int action_count);

/// phi(s): component j is sqrt(2/K) * cos(W_j . s + b_j) for the RFF basis,
/// or s itself for the identity basis.
Vector encode_state(const FeatureMap& map, const Vector& s);

/// Row-wise encode_state over a batch of states (n x input_dim).
Matrix encode_states(const FeatureMap& map, const Matrix& states);

/// phi(s, a): block `a` of the joint vector holds encode_state(s), all other
/// blocks are zero, so phi(s,a) . phi(s',a') = 0 whenever a != a'.
Vector encode_state_action(const FeatureMap& map, const Vector& s, int action);

}  // namespace pbl
