#include "pbl/qmodel.hpp"

namespace pbl {

Vector QModel::values(const Vector& s, const Vector& w) const {
  Vector out(action_count());
  for (int a = 0; a < action_count(); ++a) out(a) = value(s, a, w);
  return out;
}

Matrix QModel::min_over_weights(const Matrix& states,
                                const Matrix& weights) const {
  if (weights.rows() < 1)
    throw std::invalid_argument("min_over_weights: empty weight set");
  Matrix mins = values_batch(states, weights.row(0).transpose());
  for (Eigen::Index j = 1; j < weights.rows(); ++j)
    mins = mins.cwiseMin(values_batch(states, weights.row(j).transpose()));
  return mins;
}

double LinearQModel::value(const Vector& s, int a, const Vector& w) const {
  if (a < 0 || a >= map_.action_count)
    throw std::invalid_argument("LinearQModel: action out of range");
  if (w.size() != map_.joint_dim())
    throw std::invalid_argument("LinearQModel: weight dimension mismatch");
  const Vector phi = encode_state(map_, s);
  return w.segment(static_cast<Eigen::Index>(a) * map_.num_features,
                   map_.num_features)
      .dot(phi);
}

Vector LinearQModel::values(const Vector& s, const Vector& w) const {
  if (w.size() != map_.joint_dim())
    throw std::invalid_argument("LinearQModel: weight dimension mismatch");
  const Vector phi = encode_state(map_, s);
  Vector out(map_.action_count);
  for (int a = 0; a < map_.action_count; ++a)
    out(a) = w.segment(static_cast<Eigen::Index>(a) * map_.num_features,
                       map_.num_features)
                 .dot(phi);
  return out;
}

Matrix LinearQModel::values_batch(const Matrix& states,
                                  const Vector& w) const {
  const Matrix phi = encode_states(map_, states);
  Matrix out(states.rows(), map_.action_count);
  for (int a = 0; a < map_.action_count; ++a)
    out.col(a) = phi * w.segment(
                           static_cast<Eigen::Index>(a) * map_.num_features,
                           map_.num_features);
  return out;
}

Matrix LinearQModel::min_over_weights(const Matrix& states,
                                      const Matrix& weights) const {
  const Eigen::Index j_count = weights.rows();
  if (j_count < 1)
    throw std::invalid_argument("min_over_weights: empty weight set");
  if (weights.cols() != map_.joint_dim())
    throw std::invalid_argument("min_over_weights: weight width mismatch");
  const Matrix phi = encode_states(map_, states);
  Matrix mins(states.rows(), map_.action_count);
  constexpr Eigen::Index kChunk = 256;
  for (int a = 0; a < map_.action_count; ++a) {
    const auto block = weights.middleCols(
        static_cast<Eigen::Index>(a) * map_.num_features, map_.num_features);
    Vector col = Vector::Constant(states.rows(),
                                  std::numeric_limits<double>::infinity());
    for (Eigen::Index start = 0; start < j_count; start += kChunk) {
      const Eigen::Index rows = std::min(kChunk, j_count - start);
      const Matrix vals = phi * block.middleRows(start, rows).transpose();
      col = col.cwiseMin(vals.rowwise().minCoeff());
    }
    mins.col(a) = col;
  }
  return mins;
}

double MlpQModel::value(const Vector& s, int a, const Vector& w) const {
  if (a < 0 || a >= arch_.output_dim)
    throw std::invalid_argument("MlpQModel: action out of range");
  return mlp_forward(arch_, w, s)(a);
}

Vector MlpQModel::values(const Vector& s, const Vector& w) const {
  return mlp_forward(arch_, w, s);
}

Matrix MlpQModel::values_batch(const Matrix& states, const Vector& w) const {
  return mlp_forward_batch(arch_, w, states);
}

}  // namespace pbl
