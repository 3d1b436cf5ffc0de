// Decision rules A(x): covariates -> recommendation probability in [0,1].
// Each builtin optionally carries analytic values of the limiting APS
// (delta -> 0) and of the fixed-bandwidth APS, used as test oracles.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "apsiv/common.hpp"

namespace apsiv {

// Internal polymorphic body. Implementations must be pure functions of the
// covariates (immutable after construction, reentrant).
class RuleImpl {
 public:
  virtual ~RuleImpl() = default;
  virtual double eval(const double* xc, int pc, const std::int64_t* xd, int pd) const = 0;
  virtual std::optional<double> limit(const double* /*xc*/, int /*pc*/) const {
    return std::nullopt;
  }
  virtual std::optional<double> fixed(const double* /*xc*/, int /*pc*/, double /*delta*/) const {
    return std::nullopt;
  }
};

// Value-semantic handle; cheap to copy, safe to share across threads.
class DecisionRule {
 public:
  DecisionRule() = default;
  DecisionRule(std::string kind, int dim, std::shared_ptr<const RuleImpl> impl)
      : kind_(std::move(kind)), dim_(dim), impl_(std::move(impl)) {}

  const std::string& kind() const { return kind_; }
  // Required continuous dimension, or -1 when the rule accepts any p_c.
  int dim() const { return dim_; }
  bool empty() const { return impl_ == nullptr; }

  // Checked evaluation: validates dimension and the [0,1] output contract.
  double evaluate(std::span<const double> xc, std::span<const std::int64_t> xd = {}) const;

  // Unchecked evaluation for hot loops (caller has validated dimensions).
  double evaluate_raw(const double* xc, int pc, const std::int64_t* xd, int pd) const {
    return impl_->eval(xc, pc, xd, pd);
  }

  // Limiting APS at x where an analytic form is known; nullopt otherwise.
  std::optional<double> analytic_aps_limit(std::span<const double> xc) const;

  // Fixed-bandwidth APS p^A(x; delta) where an analytic form is known.
  std::optional<double> analytic_aps_fixed(std::span<const double> xc, double delta) const;

  // Same rule body under a different kind tag (for wrapping builders).
  DecisionRule with_kind(std::string kind) const { return DecisionRule(std::move(kind), dim_, impl_); }

 private:
  void check_dim(std::size_t pc) const;

  std::string kind_;
  int dim_ = -1;
  std::shared_ptr<const RuleImpl> impl_;
};

// Checked single-point evaluation (dimension + output-range validation).
double eval_rule(const DecisionRule& rule, std::span<const double> xc,
                 std::span<const std::int64_t> xd = {});

// ---------------------------------------------------------------------------
// Builtin families
// ---------------------------------------------------------------------------

enum class Direction { GE, LE };

struct AffineCondition {
  Eigen::VectorXd weights;
  double offset = 0.0;
  Direction direction = Direction::GE;
};

enum class Combinator { AND, OR };

// A(x) = inside_prob when the combined affine conditions hold, else outside_prob.
struct AffineThresholdRule {
  std::vector<AffineCondition> conditions;
  Combinator combinator = Combinator::AND;
  double inside_prob = 1.0;
  double outside_prob = 0.0;
};

DecisionRule make_affine_rule(AffineThresholdRule spec);

// Univariate threshold 1{x[coord] >= cutoff} (or <= when above=false).
// Accepts any p_c > coord; analytic fixed-bandwidth APS via the spherical cap.
DecisionRule make_threshold_rule(int coord, double cutoff, bool above = true);

// Scalar field of the covariates (used for Thompson / UCB mean and sd inputs).
using ScalarFn = std::function<double(const double*, int)>;

// Affine or quadratic scalar form: offset + w'x + x'Qx (Q optional). This is the
// family config files can express; arbitrary ScalarFn requires the programmatic API.
struct ScalarForm {
  double offset = 0.0;
  Eigen::VectorXd weights;  // size 0 -> absent
  Eigen::MatrixXd quad;     // size 0 -> absent
  double operator()(const double* x, int p) const;
  ScalarFn fn() const;
  int min_dim() const;
};

// Gaussian Thompson sampling: A(x) = 1 - Phi((mu0-mu1)/sqrt(s0^2+s1^2)).
// Continuous in x, so the analytic limiting APS equals the evaluation.
// Throws NonpositiveVariance when s0(x) or s1(x) <= 0.
DecisionRule thompson_gaussian_rule(ScalarFn mu0, ScalarFn mu1, ScalarFn sigma0, ScalarFn sigma1,
                                    int dim = -1);

// Upper-confidence-bound arm choice: A(x) = 1{mu1 + alpha*sigma1 > mu0 + alpha*sigma0}.
// The analytic limit is 0.5 exactly on the tie set; this presumes the tie set is a
// smooth boundary (nonvanishing gradient there), which is the caller's obligation.
DecisionRule ucb_rule(ScalarFn mu0, ScalarFn mu1, ScalarFn sigma0, ScalarFn sigma1, double alpha,
                      int dim = -1);

// Two-dimensional tree/quadrant classifier: q2 on the open positive quadrant,
// q1 elsewhere. Analytic limit: 3/4·q1 + 1/4·q2 at the origin, (q1+q2)/2 on the
// open boundary rays.
DecisionRule tree_rule_quadrant(double q1, double q2);

// Nearest-centroid targeting: 1 iff the closest centroid's index is targeted.
// Sample-point ties break to the lowest index; the analytic limit is (q of the
// two cells averaged) = 0.5 on two-way boundary interiors with mixed membership.
DecisionRule kmeans_target_rule(std::vector<Eigen::VectorXd> centroids, std::vector<int> targets);

// Constant-probability rule.
DecisionRule constant_rule(double p);

// Epsilon-greedy band rule: band_prob when x[coord] is in [lo, hi], else
// 1{outside_score(x) >= 0}. `dim` fixes the required p_c when >= 0.
DecisionRule make_band_rule(int coord, double lo, double hi, double band_prob,
                            ScalarFn outside_score, int dim = -1);

// Programmatic plugin rule.
DecisionRule custom_rule(
    std::string kind, int dim,
    std::function<double(std::span<const double>, std::span<const std::int64_t>)> fn);

// ---------------------------------------------------------------------------
// Hospital-relief eligibility rule and funding formula
// ---------------------------------------------------------------------------

struct CaresThresholds {
  double dpp_min = 0.202;
  double ucc_per_bed_min = 25000.0;
  double margin_max = 0.03;
};

// Eligibility on covariates (dpp, ucc_per_bed, margin): all three thresholds must hold.
DecisionRule cares_rule(CaresThresholds t = {});

struct CaresFunding {
  int eligible = 0;
  double funding = 0.0;
};

// Facility score = dpp * beds; an eligible facility receives
// clamp(score / cumulative_score * pool, floor, cap), an ineligible one receives 0.
CaresFunding cares_rule_and_funding(double dpp, double ucc_per_bed, double margin, double beds,
                                    double cumulative_score, double pool = 1e10,
                                    double funding_floor = 5e6, double funding_cap = 5e7,
                                    CaresThresholds t = {});

}  // namespace apsiv
