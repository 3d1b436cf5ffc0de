// Simulated fixed-bandwidth APS: for each observation, average the rule over S
// uniform draws from the open delta-ball around its (standardized) continuous
// covariates, holding discrete codes fixed. Plus the analytic oracles for
// geometries where the ball average has a closed form.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "apsiv/data.hpp"
#include "apsiv/rng.hpp"
#include "apsiv/rules.hpp"
#include "apsiv/special.hpp"

namespace apsiv {

struct ApsConfig {
  double delta = 0.1;
  std::int64_t draws = 1000;
  std::uint64_t seed = 1;
};

struct ApsResult {
  Eigen::VectorXd values;                // p^s(X_i; delta), each k/S for indicator rules
  std::vector<std::uint8_t> nondegenerate;  // 1 iff 0 < value < 1 (exact comparison)
  double delta = 0.0;
  std::int64_t draws = 0;
  std::uint64_t seed = 0;

  std::int64_t n_nondegenerate() const {
    std::int64_t c = 0;
    for (auto b : nondegenerate) c += b;
    return c;
  }
};

// One point uniform on the open delta-ball around `center` (dimension p >= 1).
// Direction from normalized Gaussians, radius delta * U^(1/p); the 1-D case
// collapses to sign x radius and is served from a single RNG word.
void sample_uniform_ball(const double* center, int p, double delta, RngStream& stream,
                         double* out);

inline Eigen::VectorXd sample_uniform_ball(std::span<const double> center, double delta,
                                           RngStream& stream) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(center.size()));
  sample_uniform_ball(center.data(), static_cast<int>(center.size()), delta, stream, out.data());
  return out;
}

// Simulated APS for every row. The dataset should be standardized (a warning is
// printed otherwise). When `unmap` is given, the ball is sampled in standardized
// coordinates but the rule is evaluated in original units (unmap inverts the
// standardization); use this when the rule was defined on raw covariates.
// Observation i draws only from stream (seed, i), so results are identical for
// any thread count.
ApsResult simulate_aps(const Dataset& data, const DecisionRule& rule, const ApsConfig& config,
                       const StandardizationMap* unmap = nullptr, int threads = 1);

// Exact propensity A(X_i) packaged like an ApsResult (delta/draws = 0); the
// "control for the true score" benchmark.
ApsResult exact_propensity(const Dataset& data, const DecisionRule& rule,
                           const StandardizationMap* unmap = nullptr);

// Closed-form fixed-bandwidth APS of the univariate threshold rule 1{x >= c}:
// (x - c)/(2 delta) + 1/2, clamped to [0, 1].
double analytic_aps_univariate_threshold(double x, double c, double delta);

// cap_fraction(v, p) — the half-space ball fraction — lives in special.hpp and is
// re-exported through this header.

}  // namespace apsiv
