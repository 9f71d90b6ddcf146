#pragma once

#include <memory>

#include "pbl/bnn.hpp"
#include "pbl/features.hpp"
#include "pbl/numerics.hpp"

namespace pbl {

/// Evaluator of f(s, a, w) for a parameterized Q-model. Implementations are
/// immutable and safe to share across threads.
class QModel {
 public:
  virtual ~QModel() = default;
  virtual int action_count() const = 0;
  virtual int param_dim() const = 0;
  virtual int state_dim() const = 0;
  virtual double value(const Vector& s, int a, const Vector& w) const = 0;

  /// f(s, a, w) for every action at once.
  virtual Vector values(const Vector& s, const Vector& w) const;

  /// Rows of `states` evaluated at fixed weights: (n x action_count).
  virtual Matrix values_batch(const Matrix& states, const Vector& w) const = 0;

  /// Elementwise minimum of values_batch over the rows of `weights`
  /// (J x param_dim). Implementations may override with a faster path.
  virtual Matrix min_over_weights(const Matrix& states,
                                  const Matrix& weights) const;
};

/// f(s, a, w) = w^T phi(s, a) with the per-action block feature layout.
class LinearQModel final : public QModel {
 public:
  explicit LinearQModel(FeatureMap map) : map_(std::move(map)) {}
  const FeatureMap& map() const { return map_; }

  int action_count() const override { return map_.action_count; }
  int param_dim() const override { return map_.joint_dim(); }
  int state_dim() const override { return map_.input_dim; }
  double value(const Vector& s, int a, const Vector& w) const override;
  Vector values(const Vector& s, const Vector& w) const override;
  Matrix values_batch(const Matrix& states, const Vector& w) const override;
  Matrix min_over_weights(const Matrix& states,
                          const Matrix& weights) const override;

 private:
  FeatureMap map_;
};

/// f(s, a, w) = head `a` of the MLP forward pass.
class MlpQModel final : public QModel {
 public:
  explicit MlpQModel(MlpArchitecture arch) : arch_(std::move(arch)) {
    arch_.validate();
  }
  const MlpArchitecture& arch() const { return arch_; }

  int action_count() const override { return arch_.output_dim; }
  int param_dim() const override { return arch_.param_count(); }
  int state_dim() const override { return arch_.input_dim; }
  double value(const Vector& s, int a, const Vector& w) const override;
  Vector values(const Vector& s, const Vector& w) const override;
  Matrix values_batch(const Matrix& states, const Vector& w) const override;

 private:
  MlpArchitecture arch_;
};

}  // namespace pbl
