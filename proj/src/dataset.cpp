#include "pbl/dataset.hpp"

namespace pbl {

void Dataset::validate() const {
  const int n = size();
  if (actions.size() != n || rewards.size() != n)
    throw std::invalid_argument("Dataset: column lengths disagree");
  if (propensities.size() != 0 && propensities.size() != n)
    throw std::invalid_argument("Dataset: propensity column length mismatch");
  for (int i = 0; i < n; ++i) {
    if (actions(i) < 0 || actions(i) >= action_count)
      throw std::invalid_argument("Dataset: action index out of range");
  }
}

bool TrajectoryDataset::has_propensities() const {
  if (propensities.size() != states.size()) return false;
  for (const auto& p : propensities)
    if (p.size() == 0) return false;
  return !propensities.empty();
}

void TrajectoryDataset::validate() const {
  const int t_count = stages();
  if (t_count == 0) throw std::invalid_argument("TrajectoryDataset: empty");
  if (static_cast<int>(actions.size()) != t_count)
    throw std::invalid_argument("TrajectoryDataset: stage count mismatch");
  const int n = size();
  for (int t = 0; t < t_count; ++t) {
    if (states[t].rows() != n || actions[t].size() != n)
      throw std::invalid_argument("TrajectoryDataset: ragged stages");
    for (int i = 0; i < n; ++i)
      if (actions[t](i) < 0 || actions[t](i) >= action_count)
        throw std::invalid_argument("TrajectoryDataset: action out of range");
  }
  if (terminal_rewards.size() != n)
    throw std::invalid_argument("TrajectoryDataset: reward length mismatch");
}

int TrajectoryDataset::history_dim(int stage) const {
  if (stage < 1 || stage > stages())
    throw std::invalid_argument("history_dim: stage out of range");
  int dim = 0;
  for (int t = 1; t < stage; ++t)
    dim += state_dim(t) + action_count;
  return dim + state_dim(stage);
}

Vector TrajectoryDataset::history(int i, int stage) const {
  Vector h = Vector::Zero(history_dim(stage));
  Eigen::Index pos = 0;
  for (int t = 1; t < stage; ++t) {
    const int d = state_dim(t);
    h.segment(pos, d) = states[t - 1].row(i).transpose();
    pos += d;
    h(pos + actions[t - 1](i)) = 1.0;
    pos += action_count;
  }
  h.segment(pos, state_dim(stage)) = states[stage - 1].row(i).transpose();
  return h;
}

Matrix TrajectoryDataset::histories(int stage) const {
  const int n = size();
  Matrix h = Matrix::Zero(n, history_dim(stage));
  Eigen::Index pos = 0;
  for (int t = 1; t < stage; ++t) {
    const int d = state_dim(t);
    h.middleCols(pos, d) = states[t - 1];
    pos += d;
    for (int i = 0; i < n; ++i) h(i, pos + actions[t - 1](i)) = 1.0;
    pos += action_count;
  }
  h.middleCols(pos, state_dim(stage)) = states[stage - 1];
  return h;
}

Vector flatten_history(const std::vector<Vector>& states,
                       const std::vector<int>& actions, int action_count) {
  if (states.empty())
    throw std::invalid_argument("flatten_history: no states");
  if (actions.size() + 1 != states.size())
    throw std::invalid_argument(
        "flatten_history: need exactly one fewer action than states");
  Eigen::Index dim = states.back().size();
  for (std::size_t t = 0; t + 1 < states.size(); ++t)
    dim += states[t].size() + action_count;
  Vector h = Vector::Zero(dim);
  Eigen::Index pos = 0;
  for (std::size_t t = 0; t + 1 < states.size(); ++t) {
    h.segment(pos, states[t].size()) = states[t];
    pos += states[t].size();
    if (actions[t] < 0 || actions[t] >= action_count)
      throw std::invalid_argument("flatten_history: action out of range");
    h(pos + actions[t]) = 1.0;
    pos += action_count;
  }
  h.segment(pos, states.back().size()) = states.back();
  return h;
}

}  // namespace pbl
