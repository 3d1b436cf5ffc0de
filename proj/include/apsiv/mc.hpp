// Monte Carlo replication loop: repeatedly draw a sample, compute the simulated
// APS, run the selected estimators, and aggregate bias / SD / RMSE / coverage
// against the oracle estimands.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "apsiv/dgp.hpp"
#include "apsiv/estimators.hpp"

namespace apsiv {

struct McConfig {
  std::vector<double> deltas;  // one APS pass per delta; may be empty if only naive modes run
  std::int64_t draws = 1000;
  std::int64_t replications = 200;
  std::vector<RegressionMode> estimators = {RegressionMode::TslsTreatment};
  std::uint64_t seed = 1;
  int threads = 1;
  double max_failure_fraction = 0.10;  // abort when failed replications exceed this share
  // Fixed targets keyed by estimand name (ate, ate_rct, late, late_rct). For
  // estimands not listed, the target is the mean of the per-replication sample
  // analogs.
  std::map<std::string, double> estimand_overrides;

  void validate() const;
};

// One (estimator, estimand, delta) column of the summary table.
struct McCell {
  std::string estimator;        // regression_mode_name()
  std::string estimand;         // ate | ate_rct | late | late_rct
  std::optional<double> delta;  // empty for the naive modes
  double target = 0.0;
  double bias = 0.0;      // mean(beta1) - target
  double sd = 0.0;        // population convention (denominator R_used)
  double rmse = 0.0;      // sqrt(bias^2 + sd^2), exactly
  double coverage = 0.0;  // share of replications with |target - beta1| <= 1.96 se
  double avg_n_used = 0.0;
  std::int64_t replications_used = 0;
};

struct McSummary {
  std::vector<McCell> cells;
  std::int64_t replications = 0;  // requested R
  std::int64_t failures = 0;      // replications with at least one failed piece
  std::vector<std::string> failure_messages;  // distinct messages, capped

  const McCell* find(const std::string& estimator, const std::string& estimand,
                     std::optional<double> delta = {}) const;
};

// Produces one replication's sample from its derived seed. Must be safe to call
// concurrently from multiple threads.
using SampleSource = std::function<DgpSample(std::uint64_t rep_seed)>;

// Replication r uses seed hash(config.seed, 1000000 + r); the APS pass for
// delta index k inside a replication uses hash(rep_seed, 2000 + k). Results are
// therefore identical for any thread count. Failed replications are excluded
// from the affected cells; more than max_failure_fraction of them aborts with
// TooManyFailures.
McSummary run_monte_carlo(const SampleSource& source, const McConfig& config);

// Synthetic-DGP entry point: the population (covariance factor, outcome
// coefficients, prediction function) is built once from dgp.seed and shared by
// every replication.
McSummary run_monte_carlo(const DgpConfig& dgp, const McConfig& config);

}  // namespace apsiv
