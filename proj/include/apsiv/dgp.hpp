// Synthetic data-generating process for validating the estimator: correlated
// Gaussian covariates, two treatment-effect models (independent of X or linear
// in X), and a recommendation rule that mixes a thin randomized band with a
// deterministic ML-prediction threshold. Includes the oracle estimands.
#pragma once

#include <cstdint>
#include <optional>

#include "apsiv/aps.hpp"
#include "apsiv/data.hpp"
#include "apsiv/rules.hpp"
#include "apsiv/tree.hpp"

namespace apsiv {

struct DgpConfig {
  std::int64_t n = 10000;
  int p = 100;
  enum class Model { A, B } model = Model::A;  // A: effect independent of X; B: effect = X'alpha1
  double band_lo = 0.495;  // quantile band of X1 that gets the fair coin
  double band_hi = 0.505;
  std::uint64_t seed = 1;
  std::int64_t surrogate_n = 2000;  // independent sample used to fit tau_pred
  double y0_x_scale = 0.75;
  double y0_noise_scale = 0.25;
  double surrogate_x_scale = 0.5;  // surrogate effect mix: 0.5*X'alpha1 + 0.5*eps1
  double surrogate_noise_scale = 0.5;

  void validate() const;
};

// tau_pred(x) = mu1(x) - mu0(x), two regression trees fitted on the surrogate
// subsamples with Z=1 and Z=0.
class TauPredictor {
 public:
  TauPredictor() = default;
  TauPredictor(RegressionTree tree1, RegressionTree tree0)
      : tree1_(std::move(tree1)), tree0_(std::move(tree0)) {}

  double operator()(const double* x) const { return tree1_.predict(x) - tree0_.predict(x); }
  const RegressionTree& tree1() const { return tree1_; }
  const RegressionTree& tree0() const { return tree0_; }

 private:
  RegressionTree tree1_;
  RegressionTree tree0_;
};

// Fit tau_pred from a surrogate sample (covariates, observed outcome,
// recommendation). Throws InsufficientSurrogate when a subsample cannot
// support the minimum leaf size.
TauPredictor fit_tau_pred(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& z);

// Everything held fixed across Monte Carlo replications: the covariance factor
// (Sigma = v*v), the outcome coefficients (normalized so Var(X'alpha) = 1), and
// the prediction function (fitted once on an independent surrogate sample).
struct DgpPopulation {
  DgpConfig config;
  Eigen::MatrixXd v;
  Eigen::VectorXd alpha0;
  Eigen::VectorXd alpha1;
  TauPredictor tau_pred;
};

DgpPopulation build_population(const DgpConfig& config);

struct DgpSample {
  Dataset data;  // raw covariate units
  PotentialOutcomes pot;
  DecisionRule rule;  // evaluates on raw covariates; encodes the realized band edges
  double band_lo_value = 0.0;
  double band_hi_value = 0.0;
};

// One sample: X ~ N(0, v*v), Y(0) = 0.75 X'alpha0 + 0.25 eps0, model-dependent
// effect, D(1) = 1{effect > u}, D(0) = 0, Z fair coin inside the empirical X1
// band and 1{tau_pred(X) >= 0} outside.
DgpSample generate_sample(const DgpPopulation& pop, std::uint64_t sample_seed);

// Convenience: build the population and draw a single sample from config.seed.
DgpSample generate_sample(const DgpConfig& config);

struct OracleEstimands {
  double ate = 0.0;
  double ate_rct = 0.0;   // over the stochastic segment A(x) in (0,1); NaN if empty
  double late = 0.0;      // over compliers D(1) != D(0)
  double late_rct = 0.0;  // compliers inside the stochastic segment; NaN if empty
  std::optional<double> weighted_beta1;  // APS-weighted effect at `delta`
  double delta = 0.0;
};

// Sample analogs of the target estimands. When `delta` is set, weighted_beta1
// uses weights p(1-p)(D1-D0) with p the fixed-bandwidth APS at that delta: the
// rule's analytic form when available, otherwise the supplied `aps_exact`
// (typically a high-S simulation).
OracleEstimands oracle_estimands(const PotentialOutcomes& pot, const Dataset& data,
                                 const DecisionRule& rule, std::optional<double> delta = {},
                                 const ApsResult* aps_exact = nullptr);

// Type-7 (linear interpolation) empirical quantile of a column.
double empirical_quantile(Eigen::VectorXd values, double q);

}  // namespace apsiv
