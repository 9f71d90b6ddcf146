#pragma once

#include <string>
#include <vector>

#include "pbl/dtr.hpp"
#include "pbl/envs.hpp"
#include "pbl/pessimism.hpp"

namespace pbl {

/// Per-replication regrets for one experiment cell.
struct RegretReport {
  std::string method;
  std::string config_digest;
  int n = 0;
  double epsilon = 0.0;
  double sigma = 0.0;
  double alpha_or_c = 0.0;
  std::vector<double> regrets;

  double mean() const;
  double std_error() const;
};

/// V(pi*) - V(pi hat) over `mc_states` fresh oracle draws, using noise-free
/// true means (reward noise is mean-zero, so it is excluded). Single-stage
/// regrets are pointwise nonnegative; two-stage rollouts share transition
/// noise between the optimal and estimated policies.
double regret(const Policy& policy, const EnvSpec& spec, int mc_states,
              RandomSeed seed);

double regret(const StagePolicySet& set, const EnvSpec& spec, int mc_states,
              RandomSeed seed);

/// (1/n) sum r_i 1{pi(s_i) = a_i} / b_i, propensities clipped below at 0.01.
/// Missing propensities are an error, never an implicit uniform assumption.
double ope_importance_sampling(const Dataset& data, const Policy& policy);

/// Multi-stage variant: the weight is the product of per-stage
/// indicator/propensity ratios and only the terminal reward is weighted.
double ope_importance_sampling(const TrajectoryDataset& data,
                               const StagePolicySet& set);

struct CoverageResult {
  bool covered = false;   // lower bound <= true mean everywhere on the grid
  double worst_gap = 0.0; // max of (bound - true mean); positive = violation
};

/// Checks the bound against the oracle mean on a seeded grid of
/// `grid_size` states times all actions.
CoverageResult coverage_diagnostic(const LowerBoundFn& bound,
                                   const EnvSpec& spec, int grid_size,
                                   RandomSeed seed);

struct RateResult {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<int> excluded;  // indices dropped for nonpositive means
};

/// OLS slope of log(mean regret) against log(n). Points with nonpositive
/// mean regret are excluded and reported.
RateResult rate_check(const std::vector<double>& sample_sizes,
                      const std::vector<double>& mean_regrets);

}  // namespace pbl
