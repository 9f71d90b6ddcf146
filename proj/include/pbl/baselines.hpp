#pragma once

#include "pbl/dtr.hpp"

namespace pbl {

/// Ridge fit plus the width of its uncertainty quantifier:
/// Gamma(s,a) = c * p * sqrt(phi' Lambda^{-1} phi) * sqrt(log(2 d n / xi))
/// with Lambda = sum phi phi' + lambda I and d taken equal to p.
struct PeviModel {
  Vector ridge_weights;  // p
  Matrix lambda_inv;     // p x p
  double c = 1.0;
  double xi = 0.1;
  double lambda = 1.0;
  int n = 0;
  int feature_dim = 0;  // p
};

PeviModel pevi_fit(const Dataset& data, const FeatureMap& map, double lambda,
                   double c, double xi);

/// ridge prediction minus Gamma. Throws std::domain_error when the log
/// argument 2 d n / xi is <= 1 (too few samples for the bound to be
/// defined); c = 0 skips the penalty entirely.
double pevi_lower_bound(const PeviModel& model, const Vector& phi);

/// Gamma(s, a) alone (0 when c == 0).
double pevi_penalty(const PeviModel& model, const Vector& phi);

/// Greedy policy over the PEVI lower bound.
Policy pevi_policy(const PeviModel& model, const FeatureMap& map);

/// Standard Q-learning without pessimism: greedy over the posterior-mean
/// prediction of the chosen model family.
Policy nonpessi_policy(ModelFamily family, const Dataset& data,
                       const DtrConfig& config);

/// Backward induction where every stage bound is the PEVI lower bound and
/// pseudo-rewards are its stagewise maxima.
StagePolicySet pevi_policy_dtr(const TrajectoryDataset& data,
                               const BasisConfig& basis, double lambda,
                               double c, double xi);

}  // namespace pbl
