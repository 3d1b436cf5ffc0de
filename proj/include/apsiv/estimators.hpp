// APS-controlled 2SLS / OLS with HC0 robust inference, the uncontrolled
// benchmarks, and the bandwidth sweep. All regressions run only on rows whose
// simulated APS is strictly inside (0,1), except the naive modes which use the
// full sample.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "apsiv/aps.hpp"
#include "apsiv/data.hpp"

namespace apsiv {

enum class RegressionMode {
  TslsTreatment,      // Y on (1, D, aps), D instrumented by Z
  OlsRecommendation,  // Y on (1, Z, aps)
  OlsBalance,         // W on (1, Z, aps)
  OlsNaive,           // Y on (1, D)
  TslsNaive,          // Y on (1, D), D instrumented by Z, no controls
};

const char* regression_mode_name(RegressionMode mode);

enum class InterceptPolicy {
  Auto,    // drop the constant iff the used-sample APS values are all one number
  Forced,  // always keep the constant
};

struct EstimateReport {
  RegressionMode mode = RegressionMode::TslsTreatment;
  double beta1 = 0.0;      // coefficient on D (treatment modes) or Z (recommendation/balance)
  double se_robust = 0.0;  // HC0 sandwich, no dof correction
  std::vector<std::string> coef_names;
  std::vector<double> coefficients;
  std::vector<double> se_all;
  bool has_first_stage = false;
  double first_stage_gamma1 = 0.0;
  double first_stage_se = 0.0;
  std::int64_t n_total = 0;
  std::int64_t n_used = 0;
  bool intercept_dropped = false;
  double delta = 0.0;      // echoed from the ApsResult (0 for naive modes)
  std::int64_t draws = 0;  // likewise
};

EstimateReport tsls_aps(const Dataset& data, const ApsResult& aps,
                        InterceptPolicy intercept = InterceptPolicy::Auto);

EstimateReport ols_recommendation(const Dataset& data, const ApsResult& aps,
                                  InterceptPolicy intercept = InterceptPolicy::Auto);

EstimateReport ols_balance(const Dataset& data, const Eigen::VectorXd& w, const ApsResult& aps,
                           InterceptPolicy intercept = InterceptPolicy::Auto);

EstimateReport naive_ols(const Dataset& data);

EstimateReport naive_tsls(const Dataset& data);

// Dispatch helper for the non-balance modes.
EstimateReport run_regression(const Dataset& data, const ApsResult& aps, RegressionMode mode,
                              InterceptPolicy intercept = InterceptPolicy::Auto);

struct SweepEntry {
  double delta = 0.0;
  std::optional<EstimateReport> report;
  std::string error;  // nonempty iff this bandwidth failed
};

// One APS simulation + regression per bandwidth. Entry k uses the derived seed
// hash(seed, k) — keyed by list position, so reordering deltas changes draws.
// Per-entry failures are recorded, never thrown.
std::vector<SweepEntry> bandwidth_sweep(const Dataset& data, const DecisionRule& rule,
                                        const std::vector<double>& deltas, std::int64_t draws,
                                        std::uint64_t seed,
                                        const StandardizationMap* unmap = nullptr,
                                        RegressionMode mode = RegressionMode::TslsTreatment,
                                        int threads = 1);

}  // namespace apsiv
