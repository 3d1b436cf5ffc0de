#include "apsiv/rules.hpp"

#include <cmath>
#include <limits>

#include "apsiv/special.hpp"

namespace apsiv {

void DecisionRule::check_dim(std::size_t pc) const {
  require(impl_ != nullptr, Errc::ConfigError, "empty decision rule");
  if (dim_ >= 0) {
    require(static_cast<std::size_t>(dim_) == pc, Errc::DimensionMismatch,
            "rule '" + kind_ + "' expects " + std::to_string(dim_) + " continuous covariates, got " +
                std::to_string(pc));
  }
}

double DecisionRule::evaluate(std::span<const double> xc, std::span<const std::int64_t> xd) const {
  check_dim(xc.size());
  const double v =
      impl_->eval(xc.data(), static_cast<int>(xc.size()), xd.data(), static_cast<int>(xd.size()));
  require(v >= 0.0 && v <= 1.0, Errc::DomainError,
          "rule '" + kind_ + "' returned a value outside [0,1]");
  return v;
}

std::optional<double> DecisionRule::analytic_aps_limit(std::span<const double> xc) const {
  check_dim(xc.size());
  return impl_->limit(xc.data(), static_cast<int>(xc.size()));
}

std::optional<double> DecisionRule::analytic_aps_fixed(std::span<const double> xc,
                                                       double delta) const {
  check_dim(xc.size());
  require(delta > 0.0, Errc::DomainError, "analytic_aps_fixed needs delta > 0");
  return impl_->fixed(xc.data(), static_cast<int>(xc.size()), delta);
}

double eval_rule(const DecisionRule& rule, std::span<const double> xc,
                 std::span<const std::int64_t> xd) {
  return rule.evaluate(xc, xd);
}

double ScalarForm::operator()(const double* x, int p) const {
  double v = offset;
  if (weights.size() > 0) {
    for (int j = 0; j < weights.size(); ++j) v += weights[j] * x[j];
  }
  if (quad.size() > 0) {
    for (int i = 0; i < quad.rows(); ++i) {
      double row = 0.0;
      for (int j = 0; j < quad.cols(); ++j) row += quad(i, j) * x[j];
      v += x[i] * row;
    }
  }
  (void)p;
  return v;
}

ScalarFn ScalarForm::fn() const {
  ScalarForm copy = *this;
  return [copy](const double* x, int p) { return copy(x, p); };
}

int ScalarForm::min_dim() const {
  return static_cast<int>(std::max<Eigen::Index>(weights.size(), quad.rows()));
}

namespace {

bool condition_holds(const AffineCondition& c, const double* x) {
  double s = -c.offset;
  for (int j = 0; j < c.weights.size(); ++j) s += c.weights[j] * x[j];
  return c.direction == Direction::GE ? s >= 0.0 : s <= 0.0;
}

class AffineImpl final : public RuleImpl {
 public:
  explicit AffineImpl(AffineThresholdRule spec) : spec_(std::move(spec)) {}

  double eval(const double* xc, int, const std::int64_t*, int) const override {
    return holds(xc) ? spec_.inside_prob : spec_.outside_prob;
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    // Local geometry: with no tight condition the rule is constant near x; with one
    // tight condition and the rest strictly resolved, the set is locally a half-space.
    int tight = 0;
    bool boundary_matters = true;
    for (const auto& c : spec_.conditions) {
      double s = -c.offset;
      for (int j = 0; j < c.weights.size(); ++j) s += c.weights[j] * xc[j];
      if (s == 0.0) {
        ++tight;
        continue;
      }
      const bool sat = c.direction == Direction::GE ? s > 0.0 : s < 0.0;
      if (spec_.combinator == Combinator::AND && !sat) boundary_matters = false;
      if (spec_.combinator == Combinator::OR && sat) boundary_matters = false;
    }
    if (tight == 0) return eval(xc, pc, nullptr, 0);
    if (tight > 1) return std::nullopt;  // corner: depends on wedge angles
    if (!boundary_matters) {
      // AND with another condition strictly violated -> outside everywhere nearby;
      // OR with another condition strictly satisfied -> inside everywhere nearby.
      return spec_.combinator == Combinator::AND ? spec_.outside_prob : spec_.inside_prob;
    }
    return 0.5 * (spec_.inside_prob + spec_.outside_prob);
  }

  std::optional<double> fixed(const double* xc, int pc, double delta) const override {
    if (spec_.conditions.size() != 1) return std::nullopt;
    const auto& c = spec_.conditions.front();
    double s = -c.offset;
    for (int j = 0; j < c.weights.size(); ++j) s += c.weights[j] * xc[j];
    const double norm = c.weights.norm();
    if (norm == 0.0) return std::nullopt;
    double v = s / (norm * delta);
    if (c.direction == Direction::LE) v = -v;
    const double inside_share = cap_fraction_saturated(v, pc);
    return spec_.outside_prob + (spec_.inside_prob - spec_.outside_prob) * inside_share;
  }

 private:
  bool holds(const double* x) const {
    if (spec_.combinator == Combinator::AND) {
      for (const auto& c : spec_.conditions)
        if (!condition_holds(c, x)) return false;
      return true;
    }
    for (const auto& c : spec_.conditions)
      if (condition_holds(c, x)) return true;
    return false;
  }

  AffineThresholdRule spec_;
};

class ThresholdImpl final : public RuleImpl {
 public:
  ThresholdImpl(int coord, double cutoff, bool above)
      : coord_(coord), cutoff_(cutoff), above_(above) {}

  double eval(const double* xc, int pc, const std::int64_t*, int) const override {
    require(coord_ < pc, Errc::DimensionMismatch, "threshold coordinate out of range");
    const bool hit = above_ ? xc[coord_] >= cutoff_ : xc[coord_] <= cutoff_;
    return hit ? 1.0 : 0.0;
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    require(coord_ < pc, Errc::DimensionMismatch, "threshold coordinate out of range");
    if (xc[coord_] == cutoff_) return 0.5;
    return eval(xc, pc, nullptr, 0);
  }

  std::optional<double> fixed(const double* xc, int pc, double delta) const override {
    require(coord_ < pc, Errc::DimensionMismatch, "threshold coordinate out of range");
    double v = (xc[coord_] - cutoff_) / delta;
    if (!above_) v = -v;
    return cap_fraction_saturated(v, pc);
  }

 private:
  int coord_;
  double cutoff_;
  bool above_;
};

class ThompsonImpl final : public RuleImpl {
 public:
  ThompsonImpl(ScalarFn mu0, ScalarFn mu1, ScalarFn s0, ScalarFn s1)
      : mu0_(std::move(mu0)), mu1_(std::move(mu1)), s0_(std::move(s0)), s1_(std::move(s1)) {}

  double eval(const double* xc, int pc, const std::int64_t*, int) const override {
    const double sd0 = s0_(xc, pc);
    const double sd1 = s1_(xc, pc);
    require(sd0 > 0.0 && sd1 > 0.0, Errc::NonpositiveVariance,
            "thompson rule needs sigma0, sigma1 > 0");
    const double t = (mu0_(xc, pc) - mu1_(xc, pc)) / std::sqrt(sd0 * sd0 + sd1 * sd1);
    return 1.0 - norm_cdf(t);
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    return eval(xc, pc, nullptr, 0);  // A is continuous here
  }

 private:
  ScalarFn mu0_, mu1_, s0_, s1_;
};

class UcbImpl final : public RuleImpl {
 public:
  UcbImpl(ScalarFn mu0, ScalarFn mu1, ScalarFn s0, ScalarFn s1, double alpha)
      : mu0_(std::move(mu0)),
        mu1_(std::move(mu1)),
        s0_(std::move(s0)),
        s1_(std::move(s1)),
        alpha_(alpha) {}

  double eval(const double* xc, int pc, const std::int64_t*, int) const override {
    return gap(xc, pc) > 0.0 ? 1.0 : 0.0;
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    const double g = gap(xc, pc);
    if (g == 0.0) return 0.5;
    return g > 0.0 ? 1.0 : 0.0;
  }

 private:
  double gap(const double* xc, int pc) const {
    return mu1_(xc, pc) + alpha_ * s1_(xc, pc) - (mu0_(xc, pc) + alpha_ * s0_(xc, pc));
  }

  ScalarFn mu0_, mu1_, s0_, s1_;
  double alpha_;
};

class QuadrantImpl final : public RuleImpl {
 public:
  QuadrantImpl(double q1, double q2) : q1_(q1), q2_(q2) {}

  double eval(const double* xc, int, const std::int64_t*, int) const override {
    return (xc[0] > 0.0 && xc[1] > 0.0) ? q2_ : q1_;
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    const double a = xc[0];
    const double b = xc[1];
    if (a == 0.0 && b == 0.0) return 0.75 * q1_ + 0.25 * q2_;
    if ((a == 0.0 && b > 0.0) || (b == 0.0 && a > 0.0)) return 0.5 * (q1_ + q2_);
    return eval(xc, pc, nullptr, 0);
  }

 private:
  double q1_, q2_;
};

class KmeansImpl final : public RuleImpl {
 public:
  KmeansImpl(std::vector<Eigen::VectorXd> centroids, std::vector<int> targets)
      : centroids_(std::move(centroids)) {
    target_.assign(centroids_.size(), false);
    for (int t : targets) {
      require(t >= 0 && static_cast<std::size_t>(t) < centroids_.size(), Errc::ConfigError,
              "kmeans target index out of range");
      target_[static_cast<std::size_t>(t)] = true;
    }
  }

  double eval(const double* xc, int pc, const std::int64_t*, int) const override {
    return target_[nearest(xc, pc)] ? 1.0 : 0.0;
  }

  std::optional<double> limit(const double* xc, int pc) const override {
    // Collect the exact argmin set; two-way boundaries with mixed membership get 0.5.
    std::vector<std::size_t> argmin;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids_.size(); ++k) {
      const double d2 = dist2(xc, pc, k);
      if (d2 < best) {
        best = d2;
        argmin.assign(1, k);
      } else if (d2 == best) {
        argmin.push_back(k);
      }
    }
    if (argmin.size() == 1) return target_[argmin[0]] ? 1.0 : 0.0;
    if (argmin.size() == 2) {
      const bool t0 = target_[argmin[0]];
      const bool t1 = target_[argmin[1]];
      if (t0 == t1) return t0 ? 1.0 : 0.0;
      return 0.5;
    }
    return std::nullopt;  // higher-order junction: limit depends on cell angles
  }

 private:
  std::size_t nearest(const double* xc, int pc) const {
    std::size_t best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids_.size(); ++k) {
      const double d2 = dist2(xc, pc, k);
      if (d2 < best) {  // strict: ties keep the lowest index
        best = d2;
        best_k = k;
      }
    }
    return best_k;
  }

  double dist2(const double* xc, int pc, std::size_t k) const {
    const Eigen::VectorXd& c = centroids_[k];
    require(c.size() == pc, Errc::DimensionMismatch, "kmeans centroid dimension mismatch");
    double d2 = 0.0;
    for (int j = 0; j < pc; ++j) {
      const double diff = xc[j] - c[j];
      d2 += diff * diff;
    }
    return d2;
  }

  std::vector<Eigen::VectorXd> centroids_;
  std::vector<bool> target_;
};

class ConstantImpl final : public RuleImpl {
 public:
  explicit ConstantImpl(double p) : p_(p) {}
  double eval(const double*, int, const std::int64_t*, int) const override { return p_; }
  std::optional<double> limit(const double*, int) const override { return p_; }
  std::optional<double> fixed(const double*, int, double) const override { return p_; }

 private:
  double p_;
};

class BandImpl final : public RuleImpl {
 public:
  BandImpl(int coord, double lo, double hi, double band_prob, ScalarFn outside)
      : coord_(coord), lo_(lo), hi_(hi), band_prob_(band_prob), outside_(std::move(outside)) {}

  double eval(const double* xc, int pc, const std::int64_t*, int) const override {
    const double x = xc[coord_];
    if (x >= lo_ && x <= hi_) return band_prob_;
    return outside_(xc, pc) >= 0.0 ? 1.0 : 0.0;
  }

  std::optional<double> limit(const double* xc, int) const override {
    const double x = xc[coord_];
    if (x > lo_ && x < hi_) return band_prob_;
    return std::nullopt;  // outside structure unknown; band edges are mixtures
  }

 private:
  int coord_;
  double lo_, hi_, band_prob_;
  ScalarFn outside_;
};

class FnImpl final : public RuleImpl {
 public:
  explicit FnImpl(std::function<double(std::span<const double>, std::span<const std::int64_t>)> fn)
      : fn_(std::move(fn)) {}

  double eval(const double* xc, int pc, const std::int64_t* xd, int pd) const override {
    return fn_({xc, static_cast<std::size_t>(pc)},
               {xd, static_cast<std::size_t>(pd)});
  }

 private:
  std::function<double(std::span<const double>, std::span<const std::int64_t>)> fn_;
};

double checked_prob(double q, const char* what) {
  require(q >= 0.0 && q <= 1.0, Errc::ConfigError, std::string(what) + " must lie in [0,1]");
  return q;
}

}  // namespace

DecisionRule make_affine_rule(AffineThresholdRule spec) {
  require(!spec.conditions.empty(), Errc::ConfigError, "affine rule needs >= 1 condition");
  checked_prob(spec.inside_prob, "inside_prob");
  checked_prob(spec.outside_prob, "outside_prob");
  const int dim = static_cast<int>(spec.conditions.front().weights.size());
  require(dim >= 1, Errc::ConfigError, "affine condition needs >= 1 weight");
  for (const auto& c : spec.conditions) {
    require(static_cast<int>(c.weights.size()) == dim, Errc::ConfigError,
            "all affine conditions must share dimension");
  }
  return DecisionRule("affine", dim, std::make_shared<AffineImpl>(std::move(spec)));
}

DecisionRule make_threshold_rule(int coord, double cutoff, bool above) {
  require(coord >= 0, Errc::ConfigError, "threshold coordinate must be >= 0");
  return DecisionRule("threshold", -1, std::make_shared<ThresholdImpl>(coord, cutoff, above));
}

DecisionRule thompson_gaussian_rule(ScalarFn mu0, ScalarFn mu1, ScalarFn sigma0, ScalarFn sigma1,
                                    int dim) {
  return DecisionRule("thompson", dim,
                      std::make_shared<ThompsonImpl>(std::move(mu0), std::move(mu1),
                                                     std::move(sigma0), std::move(sigma1)));
}

DecisionRule ucb_rule(ScalarFn mu0, ScalarFn mu1, ScalarFn sigma0, ScalarFn sigma1, double alpha,
                      int dim) {
  require(alpha >= 0.0, Errc::ConfigError, "ucb alpha must be >= 0");
  return DecisionRule("ucb", dim,
                      std::make_shared<UcbImpl>(std::move(mu0), std::move(mu1), std::move(sigma0),
                                                std::move(sigma1), alpha));
}

DecisionRule tree_rule_quadrant(double q1, double q2) {
  checked_prob(q1, "q1");
  checked_prob(q2, "q2");
  return DecisionRule("quadrant_tree", 2, std::make_shared<QuadrantImpl>(q1, q2));
}

DecisionRule kmeans_target_rule(std::vector<Eigen::VectorXd> centroids, std::vector<int> targets) {
  require(centroids.size() >= 2, Errc::ConfigError, "kmeans rule needs >= 2 centroids");
  const Eigen::Index dim = centroids.front().size();
  for (const auto& c : centroids) {
    require(c.size() == dim, Errc::ConfigError, "kmeans centroids must share dimension");
  }
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      if (centroids[a] == centroids[b]) {
        fail(Errc::DuplicateCentroids,
             "centroids " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
      }
    }
  }
  return DecisionRule("kmeans", static_cast<int>(dim),
                      std::make_shared<KmeansImpl>(std::move(centroids), std::move(targets)));
}

DecisionRule constant_rule(double p) {
  checked_prob(p, "constant rule probability");
  return DecisionRule("constant", -1, std::make_shared<ConstantImpl>(p));
}

DecisionRule make_band_rule(int coord, double lo, double hi, double band_prob,
                            ScalarFn outside_score, int dim) {
  require(coord >= 0, Errc::ConfigError, "band coordinate must be >= 0");
  require(lo <= hi, Errc::ConfigError, "band bounds must satisfy lo <= hi");
  checked_prob(band_prob, "band_prob");
  return DecisionRule("epsilon_band", dim,
                      std::make_shared<BandImpl>(coord, lo, hi, band_prob, std::move(outside_score)));
}

DecisionRule custom_rule(
    std::string kind, int dim,
    std::function<double(std::span<const double>, std::span<const std::int64_t>)> fn) {
  return DecisionRule(std::move(kind), dim, std::make_shared<FnImpl>(std::move(fn)));
}

DecisionRule cares_rule(CaresThresholds t) {
  AffineThresholdRule spec;
  spec.combinator = Combinator::AND;
  spec.inside_prob = 1.0;
  spec.outside_prob = 0.0;
  AffineCondition dpp;
  dpp.weights = Eigen::Vector3d(1.0, 0.0, 0.0);
  dpp.offset = t.dpp_min;
  dpp.direction = Direction::GE;
  AffineCondition ucc;
  ucc.weights = Eigen::Vector3d(0.0, 1.0, 0.0);
  ucc.offset = t.ucc_per_bed_min;
  ucc.direction = Direction::GE;
  AffineCondition margin;
  margin.weights = Eigen::Vector3d(0.0, 0.0, 1.0);
  margin.offset = t.margin_max;
  margin.direction = Direction::LE;
  spec.conditions = {dpp, ucc, margin};
  return make_affine_rule(std::move(spec)).with_kind("cares");
}

CaresFunding cares_rule_and_funding(double dpp, double ucc_per_bed, double margin, double beds,
                                    double cumulative_score, double pool, double funding_floor,
                                    double funding_cap, CaresThresholds t) {
  require(beds > 0.0, Errc::NonpositiveBeds, "beds must be > 0");
  require(pool > 0.0 && funding_floor > 0.0 && funding_cap > 0.0, Errc::DomainError,
          "pool, floor, cap must be > 0");
  require(funding_floor <= funding_cap, Errc::DomainError, "floor must not exceed cap");
  require(cumulative_score > 0.0, Errc::DomainError, "cumulative score must be > 0");
  CaresFunding out;
  const bool ok = dpp >= t.dpp_min && ucc_per_bed >= t.ucc_per_bed_min && margin <= t.margin_max;
  out.eligible = ok ? 1 : 0;
  if (!ok) return out;
  const double share = dpp * beds / cumulative_score;
  out.funding = std::min(funding_cap, std::max(funding_floor, share * pool));
  return out;
}

}  // namespace apsiv
