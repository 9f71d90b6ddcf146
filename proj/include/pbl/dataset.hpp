#pragma once

#include <vector>

#include "pbl/numerics.hpp"

namespace pbl {

/// Offline single-stage data: n rows of (state, action, reward), with
/// optional behavior propensities (probability the logged action had of
/// being chosen at that state).
struct Dataset {
  Matrix states;  // n x d
  IntVector actions;
  Vector rewards;
  Vector propensities;  // size 0 when not recorded
  int action_count = 2;

  int size() const { return static_cast<int>(states.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  bool has_propensities() const { return propensities.size() > 0; }
  void validate() const;
};

/// Offline multi-stage data with a sparse terminal reward. Stage t
/// (1-based) has its own state dimension; histories are assembled on demand
/// from the per-stage columns, never stored redundantly.
struct TrajectoryDataset {
  std::vector<Matrix> states;        // stage t: n x d_t
  std::vector<IntVector> actions;    // stage t: n
  std::vector<Vector> propensities;  // stage t: n, or size 0 when absent
  Vector terminal_rewards;           // n
  int action_count = 2;

  int stages() const { return static_cast<int>(states.size()); }
  int size() const {
    return states.empty() ? 0 : static_cast<int>(states[0].rows());
  }
  int state_dim(int stage) const {
    return static_cast<int>(states.at(stage - 1).cols());
  }
  bool has_propensities() const;
  void validate() const;

  /// Dimension of the flattened history h^(t) = (s1, onehot(a1), ..., st).
  int history_dim(int stage) const;

  /// Flattened history of trajectory i up to (and including) stage t's state.
  Vector history(int i, int stage) const;

  /// All flattened stage-t histories, n x history_dim(t).
  Matrix histories(int stage) const;
};

/// Flattens an explicit prefix (s1, a1, ..., s_t); actions are encoded as
/// one-hot blocks of width action_count.
Vector flatten_history(const std::vector<Vector>& states,
                       const std::vector<int>& actions, int action_count);

}  // namespace pbl
