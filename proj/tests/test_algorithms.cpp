// Decision-rule tests: evaluation semantics, analytic limiting / fixed-bandwidth
// propensity oracles, and the hospital-relief eligibility + funding formula.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <functional>
#include <optional>

#include "apsiv/common.hpp"
#include "apsiv/rules.hpp"
#include "apsiv/special.hpp"

using namespace apsiv;

namespace {

std::optional<Errc> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

ScalarFn constant_fn(double c) {
  return [c](const double*, int) { return c; };
}

ScalarFn coord_fn(int j) {
  return [j](const double* x, int) { return x[j]; };
}

}  // namespace

TEST_CASE("univariate threshold rule is the exact indicator, both directions") {
  const DecisionRule above = make_threshold_rule(0, 0.0, true);
  CHECK(above.evaluate(std::array{0.5}) == 1.0);
  CHECK(above.evaluate(std::array{-0.5}) == 0.0);
  CHECK(above.evaluate(std::array{0.0}) == 1.0);  // >= includes the cutoff

  const DecisionRule below = make_threshold_rule(0, 1.5, false);
  CHECK(below.evaluate(std::array{1.0}) == 1.0);
  CHECK(below.evaluate(std::array{2.0}) == 0.0);
  CHECK(below.evaluate(std::array{1.5}) == 1.0);  // <= includes the cutoff

  SUBCASE("works on any trailing coordinate of a wider vector") {
    const DecisionRule r = make_threshold_rule(2, 1.0);
    CHECK(r.evaluate(std::array{9.0, -9.0, 1.25}) == 1.0);
    CHECK(r.evaluate(std::array{9.0, -9.0, 0.75}) == 0.0);
    CHECK(thrown_code([&] { r.evaluate(std::array{1.0, 2.0}); }) == Errc::DimensionMismatch);
  }
  SUBCASE("limiting propensity is 0.5 on the cutoff, the indicator off it") {
    CHECK(above.analytic_aps_limit(std::array{0.0}) == 0.5);
    CHECK(above.analytic_aps_limit(std::array{0.25}) == 1.0);
    CHECK(above.analytic_aps_limit(std::array{-0.25}) == 0.0);
  }
  SUBCASE("fixed-bandwidth propensity equals the half-space ball fraction") {
    for (double x : {-0.08, -0.02, 0.0, 0.03, 0.09}) {
      const double want = cap_fraction(x / 0.1, 1);
      CHECK(std::abs(*above.analytic_aps_fixed(std::array{x}, 0.1) - want) < 1e-14);
    }
    // Below-variant mirrors; outside the ball it saturates.
    CHECK(*below.analytic_aps_fixed(std::array{1.4}, 0.05) == 1.0);
    CHECK(*below.analytic_aps_fixed(std::array{1.6}, 0.05) == 0.0);
    // In p dimensions the fraction uses the p-ball geometry.
    const double v = 0.04 / 0.1;
    CHECK(std::abs(*above.analytic_aps_fixed(std::array{0.04, 7.0, -3.0}, 0.1) -
                   cap_fraction(v, 3)) < 1e-14);
  }
}

TEST_CASE("affine threshold rules combine conditions and carry both oracles") {
  AffineThresholdRule spec;
  AffineCondition c1;
  c1.weights = Eigen::Vector2d(1.0, 1.0);
  c1.offset = 0.0;
  c1.direction = Direction::GE;
  spec.conditions = {c1};
  spec.inside_prob = 0.8;
  spec.outside_prob = 0.1;
  const DecisionRule half = make_affine_rule(spec);

  CHECK(half.evaluate(std::array{1.0, 0.5}) == 0.8);
  CHECK(half.evaluate(std::array{-1.0, 0.5}) == 0.1);

  SUBCASE("limit: interior = evaluate, boundary = midpoint of the two levels") {
    CHECK(*half.analytic_aps_limit(std::array{1.0, 0.5}) == 0.8);
    CHECK(*half.analytic_aps_limit(std::array{-2.0, 0.5}) == 0.1);
    CHECK(std::abs(*half.analytic_aps_limit(std::array{0.5, -0.5}) - 0.45) < 1e-14);
  }
  SUBCASE("fixed-bandwidth value interpolates the levels by the cap fraction") {
    const double x0 = 0.02, x1 = -0.05, delta = 0.2;
    const double v = (x0 + x1) / (std::sqrt(2.0) * delta);
    const double want = 0.1 + (0.8 - 0.1) * cap_fraction(v, 2);
    CHECK(std::abs(*half.analytic_aps_fixed(std::array{x0, x1}, delta) - want) < 1e-14);
    CHECK(*half.analytic_aps_fixed(std::array{5.0, 5.0}, 0.1) == 0.8);   // saturated inside
    CHECK(*half.analytic_aps_fixed(std::array{-5.0, 2.0}, 0.1) == 0.1);  // saturated outside
  }
  SUBCASE("AND: a strictly violated sibling forces the outside level at the boundary") {
    AffineCondition c2;
    c2.weights = Eigen::Vector2d(0.0, 1.0);
    c2.offset = 0.0;
    c2.direction = Direction::GE;
    AffineThresholdRule two = spec;
    two.conditions = {c1, c2};
    const DecisionRule both = make_affine_rule(two);
    CHECK(both.evaluate(std::array{1.0, 0.5}) == 0.8);
    CHECK(both.evaluate(std::array{1.0, -0.5}) == 0.1);
    // x1 + x2 = 0 tight, x2 < 0 strictly violated -> locally constant outside.
    CHECK(*both.analytic_aps_limit(std::array{0.5, -0.5}) == 0.1);
    // Two tight conditions form a corner with no half-space limit.
    CHECK_FALSE(both.analytic_aps_limit(std::array{0.0, 0.0}).has_value());
    // Multi-condition rules have no closed-form fixed-bandwidth value.
    CHECK_FALSE(both.analytic_aps_fixed(std::array{0.5, 0.5}, 0.1).has_value());
  }
  SUBCASE("OR: a strictly satisfied sibling forces the inside level at the boundary") {
    AffineCondition c2;
    c2.weights = Eigen::Vector2d(0.0, 1.0);
    c2.offset = 0.0;
    c2.direction = Direction::GE;
    AffineThresholdRule either = spec;
    either.conditions = {c1, c2};
    either.combinator = Combinator::OR;
    const DecisionRule any = make_affine_rule(either);
    CHECK(any.evaluate(std::array{-1.0, 0.5}) == 0.8);
    CHECK(any.evaluate(std::array{-1.0, -0.5}) == 0.1);
    CHECK(*any.analytic_aps_limit(std::array{-0.5, 0.5}) == 0.8);
  }
  SUBCASE("construction validates shapes and probabilities") {
    AffineThresholdRule bad = spec;
    bad.conditions.clear();
    CHECK(thrown_code([&] { make_affine_rule(bad); }) == Errc::ConfigError);
    bad = spec;
    bad.inside_prob = 1.2;
    CHECK(thrown_code([&] { make_affine_rule(bad); }) == Errc::ConfigError);
    bad = spec;
    AffineCondition wrong;
    wrong.weights = Eigen::Vector3d(1, 2, 3);
    bad.conditions.push_back(wrong);
    CHECK(thrown_code([&] { make_affine_rule(bad); }) == Errc::ConfigError);
  }
}

TEST_CASE("hospital-relief eligibility: all three thresholds must hold") {
  const DecisionRule rule = cares_rule();
  CHECK(rule.kind() == "cares");
  // (DPP, uncompensated care per bed, profit margin).
  CHECK(rule.evaluate(std::array{0.25, 30000.0, 0.00}) == 1.0);
  CHECK(rule.evaluate(std::array{0.25, 30000.0, 0.05}) == 0.0);

  SUBCASE("full truth table over pass/fail per coordinate") {
    const double dpp[2] = {0.25, 0.15};        // pass, fail vs 0.202 minimum
    const double ucc[2] = {30000.0, 20000.0};  // pass, fail vs 25000 minimum
    const double mar[2] = {0.00, 0.05};        // pass, fail vs 0.03 maximum
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
          const double want = (a == 0 && b == 0 && c == 0) ? 1.0 : 0.0;
          CHECK(rule.evaluate(std::array{dpp[a], ucc[b], mar[c]}) == want);
        }
  }
  SUBCASE("thresholds are inclusive at equality") {
    CHECK(rule.evaluate(std::array{0.202, 25000.0, 0.03}) == 1.0);
    CHECK(rule.evaluate(std::array{0.20199, 25000.0, 0.03}) == 0.0);
  }
  SUBCASE("custom thresholds propagate") {
    CaresThresholds t;
    t.dpp_min = 0.5;
    const DecisionRule strict = cares_rule(t);
    CHECK(strict.evaluate(std::array{0.25, 30000.0, 0.00}) == 0.0);
    CHECK(strict.evaluate(std::array{0.60, 30000.0, 0.00}) == 1.0);
  }
}

TEST_CASE("relief funding is the score share of the pool, clamped to floor and cap") {
  // Score = DPP * beds = 0.25 * 400 = 100.
  SUBCASE("interior share pays exactly share * pool") {
    const CaresFunding f = cares_rule_and_funding(0.25, 30000.0, 0.00, 400.0, 1e5);
    CHECK(f.eligible == 1);
    CHECK(f.funding == doctest::Approx(1e-3 * 1e10).epsilon(1e-12));
  }
  SUBCASE("tiny share is floored at $5 million") {
    const CaresFunding f = cares_rule_and_funding(0.25, 30000.0, 0.00, 400.0, 1e12);
    CHECK(f.eligible == 1);
    CHECK(f.funding == 5e6);
  }
  SUBCASE("huge share is capped at $50 million") {
    const CaresFunding f = cares_rule_and_funding(0.25, 30000.0, 0.00, 400.0, 150.0);
    CHECK(f.eligible == 1);
    CHECK(f.funding == 5e7);
  }
  SUBCASE("ineligible facilities get nothing regardless of score") {
    const CaresFunding f = cares_rule_and_funding(0.25, 30000.0, 0.05, 400.0, 150.0);
    CHECK(f.eligible == 0);
    CHECK(f.funding == 0.0);
  }
  SUBCASE("input validation") {
    CHECK(thrown_code([] { cares_rule_and_funding(0.25, 30000.0, 0.0, 0.0, 1e5); }) ==
          Errc::NonpositiveBeds);
    CHECK(thrown_code([] { cares_rule_and_funding(0.25, 30000.0, 0.0, -5.0, 1e5); }) ==
          Errc::NonpositiveBeds);
    CHECK(thrown_code([] { cares_rule_and_funding(0.25, 30000.0, 0.0, 400.0, 0.0); }) ==
          Errc::DomainError);
  }
}

TEST_CASE("epsilon-band rule randomizes inside the band and follows the score outside") {
  const DecisionRule rule = make_band_rule(0, -0.1, 0.1, 0.5, coord_fn(0));
  CHECK(rule.evaluate(std::array{0.05}) == 0.5);
  CHECK(rule.evaluate(std::array{-0.1}) == 0.5);  // inclusive edges
  CHECK(rule.evaluate(std::array{0.1}) == 0.5);
  CHECK(rule.evaluate(std::array{0.2}) == 1.0);   // score >= 0 outside
  CHECK(rule.evaluate(std::array{-0.2}) == 0.0);  // score < 0 outside

  SUBCASE("limiting propensity known only on the open band") {
    CHECK(*rule.analytic_aps_limit(std::array{0.0}) == 0.5);
    CHECK_FALSE(rule.analytic_aps_limit(std::array{0.1}).has_value());
    CHECK_FALSE(rule.analytic_aps_limit(std::array{0.5}).has_value());
  }
  SUBCASE("construction validates the bounds and probability") {
    CHECK(thrown_code([] { make_band_rule(0, 1.0, -1.0, 0.5, constant_fn(0)); }) ==
          Errc::ConfigError);
    CHECK(thrown_code([] { make_band_rule(0, -1.0, 1.0, 1.5, constant_fn(0)); }) ==
          Errc::ConfigError);
  }
}

TEST_CASE("gaussian posterior-sampling rule equals the closed-form normal probability") {
  SUBCASE("equal means give exactly one half") {
    const DecisionRule r =
        thompson_gaussian_rule(constant_fn(3.0), constant_fn(3.0), constant_fn(1.0),
                               constant_fn(2.0));
    CHECK(r.evaluate(std::array{0.7}) == 0.5);
  }
  SUBCASE("one-sigma advantage gives the frozen normal CDF value") {
    // mu1 - mu0 = 5 = sqrt(3^2 + 4^2).
    const DecisionRule r = thompson_gaussian_rule(constant_fn(0.0), constant_fn(5.0),
                                                  constant_fn(3.0), constant_fn(4.0));
    CHECK(std::abs(r.evaluate(std::array{0.0}) - 0.8413447460685429) < 1e-12);
  }
  SUBCASE("diffuse posteriors wash out any fixed mean gap") {
    const DecisionRule r = thompson_gaussian_rule(constant_fn(0.0), constant_fn(1.0),
                                                  constant_fn(1e8), constant_fn(1e8));
    CHECK(std::abs(r.evaluate(std::array{0.0}) - 0.5) < 1e-7);
  }
  SUBCASE("covariate-dependent means move the probability monotonically") {
    const DecisionRule r = thompson_gaussian_rule(constant_fn(0.0), coord_fn(0), constant_fn(1.0),
                                                  constant_fn(1.0));
    CHECK(r.evaluate(std::array{0.0}) == 0.5);
    CHECK(r.evaluate(std::array{1.0}) > r.evaluate(std::array{0.5}));
    CHECK(r.evaluate(std::array{-1.0}) < 0.5);
    // Continuous rule: the limiting propensity is the evaluation itself.
    for (double x : {-0.7, 0.0, 0.4}) {
      CHECK(*r.analytic_aps_limit(std::array{x}) == r.evaluate(std::array{x}));
    }
  }
  SUBCASE("nonpositive posterior spread is rejected at evaluation") {
    const DecisionRule r = thompson_gaussian_rule(constant_fn(0.0), constant_fn(1.0),
                                                  constant_fn(0.0), constant_fn(1.0));
    CHECK(thrown_code([&] { r.evaluate(std::array{0.0}); }) == Errc::NonpositiveVariance);
  }
}

TEST_CASE("upper-confidence-bound rule is the strict argmax indicator") {
  SUBCASE("a strictly dominated arm is never chosen") {
    const DecisionRule r = ucb_rule(constant_fn(0.0), constant_fn(-1.0), constant_fn(1.0),
                                    constant_fn(1.0), 1.0);
    for (double x : {-2.0, 0.0, 3.0}) CHECK(r.evaluate(std::array{x}) == 0.0);
  }
  SUBCASE("indicator and boundary limit for a hyperplane tie set") {
    // gap(x) = x1: arm 1 wins strictly on {x1 > 0}.
    const DecisionRule r = ucb_rule(constant_fn(0.0), coord_fn(0), constant_fn(1.0),
                                    constant_fn(1.0), 2.0);
    CHECK(r.evaluate(std::array{0.7}) == 1.0);
    CHECK(r.evaluate(std::array{-0.7}) == 0.0);
    CHECK(r.evaluate(std::array{0.0}) == 0.0);  // strict inequality at the tie
    CHECK(*r.analytic_aps_limit(std::array{0.0}) == 0.5);
    CHECK(*r.analytic_aps_limit(std::array{0.7}) == 1.0);
    CHECK(*r.analytic_aps_limit(std::array{-0.7}) == 0.0);
  }
  SUBCASE("common positive rescaling of all four inputs never changes the choice") {
    const double lambda = 3.7;
    auto scaled = [lambda](ScalarFn f) {
      return ScalarFn([lambda, f = std::move(f)](const double* x, int p) {
        return lambda * f(x, p);
      });
    };
    const DecisionRule base = ucb_rule(coord_fn(1), coord_fn(0), constant_fn(0.5),
                                       constant_fn(0.25), 1.5);
    const DecisionRule blown = ucb_rule(scaled(coord_fn(1)), scaled(coord_fn(0)),
                                        scaled(constant_fn(0.5)), scaled(constant_fn(0.25)), 1.5);
    for (double a : {-1.0, -0.2, 0.0, 0.9})
      for (double b : {-0.8, 0.1, 1.3}) {
        CHECK(base.evaluate(std::array{a, b}) == blown.evaluate(std::array{a, b}));
      }
  }
  SUBCASE("negative exploration bonus is rejected") {
    CHECK(thrown_code([] {
            ucb_rule(constant_fn(0), constant_fn(0), constant_fn(1), constant_fn(1), -0.1);
          }) == Errc::ConfigError);
  }
}

TEST_CASE("two-split tree rule: quadrant levels and corner/edge limits") {
  const DecisionRule r = tree_rule_quadrant(0.0, 1.0);
  CHECK(r.dim() == 2);
  CHECK(r.evaluate(std::array{1.0, 1.0}) == 1.0);
  CHECK(r.evaluate(std::array{-1.0, 1.0}) == 0.0);
  CHECK(r.evaluate(std::array{1.0, -1.0}) == 0.0);
  CHECK(r.evaluate(std::array{-1.0, -1.0}) == 0.0);

  SUBCASE("limits: quarter weight at the corner, half weight on open edges") {
    CHECK(*r.analytic_aps_limit(std::array{0.0, 0.0}) == 0.25);
    CHECK(*r.analytic_aps_limit(std::array{0.0, 0.5}) == 0.5);
    CHECK(*r.analytic_aps_limit(std::array{0.5, 0.0}) == 0.5);
    CHECK(*r.analytic_aps_limit(std::array{-0.3, 0.0}) == 0.0);  // locally constant side
    CHECK(*r.analytic_aps_limit(std::array{2.0, 3.0}) == 1.0);
  }
  SUBCASE("boundary limits stay between the two leaf probabilities") {
    const DecisionRule s = tree_rule_quadrant(0.2, 0.6);
    const double corner = *s.analytic_aps_limit(std::array{0.0, 0.0});
    CHECK(std::abs(corner - (0.75 * 0.2 + 0.25 * 0.6)) < 1e-14);
    for (const auto& pt : {std::array{0.0, 0.0}, std::array{0.0, 1.0}, std::array{1.0, 0.0}}) {
      const double lim = *s.analytic_aps_limit(pt);
      CHECK(lim >= 0.2);
      CHECK(lim <= 0.6);
    }
  }
  SUBCASE("dimension contract") {
    CHECK(thrown_code([&] { r.evaluate(std::array{1.0, 2.0, 3.0}); }) == Errc::DimensionMismatch);
    CHECK(thrown_code([] { tree_rule_quadrant(-0.1, 0.5); }) == Errc::ConfigError);
  }
}

TEST_CASE("nearest-centroid targeting rule: membership, ties, and boundary limits") {
  std::vector<Eigen::VectorXd> centroids{Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, 0.0)};
  const DecisionRule r = kmeans_target_rule(centroids, {1});
  CHECK(r.evaluate(std::array{2.0, 0.0}) == 1.0);
  CHECK(r.evaluate(std::array{-2.0, 0.0}) == 0.0);

  SUBCASE("sample-point ties break deterministically to the lowest index") {
    CHECK(r.evaluate(std::array{0.0, 0.3}) == 0.0);  // centroid 0 wins the tie
    const DecisionRule flipped = kmeans_target_rule(centroids, {0});
    CHECK(flipped.evaluate(std::array{0.0, 0.3}) == 1.0);
  }
  SUBCASE("two-way boundary with mixed membership has limit one half") {
    CHECK(*r.analytic_aps_limit(std::array{0.0, 0.3}) == 0.5);
    CHECK(*r.analytic_aps_limit(std::array{0.0, -7.0}) == 0.5);
    CHECK(*r.analytic_aps_limit(std::array{0.5, 0.0}) == 1.0);  // interior of target cell
  }
  SUBCASE("two-way boundary between same-membership cells is constant") {
    std::vector<Eigen::VectorXd> three{Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, 0.0),
                                       Eigen::Vector2d(0.0, 5.0)};
    const DecisionRule both = kmeans_target_rule(three, {0, 1});
    CHECK(*both.analytic_aps_limit(std::array{0.0, 0.0}) == 1.0);
  }
  SUBCASE("higher-order junctions have no generic limit") {
    std::vector<Eigen::VectorXd> three{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0),
                                       Eigen::Vector2d(0.0, 1.0)};
    const DecisionRule j = kmeans_target_rule(three, {2});
    CHECK_FALSE(j.analytic_aps_limit(std::array{0.0, 0.0}).has_value());
  }
  SUBCASE("construction contracts") {
    CHECK(thrown_code([&] { kmeans_target_rule({centroids[0]}, {0}); }) == Errc::ConfigError);
    CHECK(thrown_code([&] { kmeans_target_rule({centroids[0], centroids[0]}, {0}); }) ==
          Errc::DuplicateCentroids);
    CHECK(thrown_code([&] { kmeans_target_rule(centroids, {2}); }) == Errc::ConfigError);
    CHECK(thrown_code([&] { r.evaluate(std::array{0.0, 0.0, 0.0}); }) == Errc::DimensionMismatch);
  }
}

TEST_CASE("constant and custom rules, and the checked-evaluation contract") {
  const DecisionRule c = constant_rule(0.3);
  CHECK(c.evaluate(std::array{42.0}) == 0.3);
  CHECK(c.evaluate(std::array{-1.0, 5.0, 9.0}) == 0.3);
  CHECK(*c.analytic_aps_limit(std::array{1.0}) == 0.3);
  CHECK(*c.analytic_aps_fixed(std::array{1.0}, 0.2) == 0.3);
  CHECK(thrown_code([] { constant_rule(1.0001); }) == Errc::ConfigError);

  SUBCASE("custom rules can read discrete covariates") {
    const DecisionRule r = custom_rule(
        "parity", -1, [](std::span<const double>, std::span<const std::int64_t> xd) {
          return xd.empty() ? 0.0 : static_cast<double>(xd[0] % 2 != 0);
        });
    const std::array<double, 1> xc{0.0};
    const std::array<std::int64_t, 1> odd{3}, even{4};
    CHECK(r.evaluate(xc, odd) == 1.0);
    CHECK(r.evaluate(xc, even) == 0.0);
    CHECK_FALSE(r.analytic_aps_limit(xc).has_value());
  }
  SUBCASE("outputs outside [0,1] are rejected by checked evaluation") {
    const DecisionRule bad =
        custom_rule("broken", -1,
                    [](std::span<const double>, std::span<const std::int64_t>) { return 1.5; });
    CHECK(thrown_code([&] { bad.evaluate(std::array{0.0}); }) == Errc::DomainError);
  }
  SUBCASE("an empty handle cannot be evaluated") {
    const DecisionRule none;
    CHECK(thrown_code([&] { none.evaluate(std::array{0.0}); }) == Errc::ConfigError);
  }
  SUBCASE("free-function evaluation matches the member") {
    CHECK(eval_rule(c, std::array{1.0}) == 0.3);
  }
}
