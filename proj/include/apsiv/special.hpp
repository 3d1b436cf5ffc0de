// Small special-function kit: standard normal CDF, regularized incomplete beta
// (continued fraction), and the spherical-cap volume fraction built on it.
#pragma once

#include <cmath>

#include "apsiv/common.hpp"

namespace apsiv {

inline double norm_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

namespace detail {

// Continued-fraction kernel for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-14;
  constexpr int max_iter = 500;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double reg_inc_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, Errc::DomainError, "reg_inc_beta needs a, b > 0");
  require(x >= 0.0 && x <= 1.0, Errc::DomainError, "reg_inc_beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_cf(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Fraction of a unit p-ball's volume lying on the side {t'x >= -v} of a hyperplane
// at signed normalized distance v from the center: the fixed-bandwidth APS of a
// half-space. k(0) = 1/2; k -> 1 as v -> 1; reduces to (1+v)/2 at p = 1.
inline double cap_fraction(double v, int p) {
  require(p >= 1, Errc::DomainError, "cap_fraction needs p >= 1");
  require(std::fabs(v) < 1.0, Errc::DomainError, "cap_fraction needs |v| < 1");
  const double ib = reg_inc_beta((p + 1.0) / 2.0, 0.5, 1.0 - v * v);
  return v >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

// cap_fraction extended to all signed distances: saturates at 0 / 1 outside the ball.
inline double cap_fraction_saturated(double v, int p) {
  if (v <= -1.0) return 0.0;
  if (v >= 1.0) return 1.0;
  return cap_fraction(v, p);
}

}  // namespace apsiv
