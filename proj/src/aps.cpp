#include "apsiv/aps.hpp"

#include <cmath>
#include <cstdio>

#include "apsiv/common.hpp"

namespace apsiv {

namespace {

inline void ball_point(const double* center, int p, double delta, RngStream& g, double* out) {
  if (p == 1) {
    // sign x (delta * U): one word supplies an independent sign bit and a 53-bit radius.
    const std::uint64_t w = g.next_u64();
    const double r = static_cast<double>(w >> 11) * 0x1.0p-53;
    const double offset = delta * r;
    out[0] = center[0] + ((w & 1u) ? offset : -offset);
    return;
  }
  double norm2;
  do {
    norm2 = 0.0;
    for (int j = 0; j < p; ++j) {
      const double gj = g.normal();
      out[j] = gj;
      norm2 += gj * gj;
    }
  } while (norm2 == 0.0);
  const double u = g.uniform01();
  const double radius = p == 2 ? std::sqrt(u) : std::pow(u, 1.0 / p);
  const double scale = delta * radius / std::sqrt(norm2);
  for (int j = 0; j < p; ++j) out[j] = center[j] + scale * out[j];
}

void warn_if_unstandardized(const Dataset& data) {
  const std::int64_t n = data.n();
  if (n < 2) return;
  for (int j = 0; j < data.p_cont(); ++j) {
    const auto col = data.x_cont.col(j);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n);
    if (var == 0.0) continue;  // constant columns pass through unscaled by design
    if (std::fabs(mean) > 0.05 || std::fabs(var - 1.0) > 0.1) {
      std::fprintf(stderr,
                   "apsiv: warning: continuous covariates look unstandardized "
                   "(column %d: mean %.3g, variance %.3g); the delta-ball geometry "
                   "assumes standardized coordinates\n",
                   j, mean, var);
      return;
    }
  }
}

}  // namespace

void sample_uniform_ball(const double* center, int p, double delta, RngStream& stream,
                         double* out) {
  require(p >= 1, Errc::DimensionMismatch, "ball dimension must be >= 1");
  require(delta > 0.0, Errc::DomainError, "ball radius must be > 0");
  ball_point(center, p, delta, stream, out);
}

ApsResult simulate_aps(const Dataset& data, const DecisionRule& rule, const ApsConfig& config,
                       const StandardizationMap* unmap, int threads) {
  require(config.delta > 0.0, Errc::ConfigError, "aps delta must be > 0");
  require(config.draws >= 1, Errc::ConfigError, "aps draws must be >= 1");
  const std::int64_t n = data.n();
  const int pc = data.p_cont();
  const int pd = data.p_disc();
  require(n >= 1, Errc::EmptyDataset, "simulate_aps needs at least one row");
  require(pc >= 1, Errc::DimensionMismatch, "simulate_aps needs >= 1 continuous covariate");
  if (rule.dim() >= 0) {
    require(rule.dim() == pc, Errc::DimensionMismatch,
            "rule expects " + std::to_string(rule.dim()) + " continuous covariates, data has " +
                std::to_string(pc));
  }
  if (unmap != nullptr) {
    require(unmap->dim() == pc, Errc::DimensionMismatch,
            "standardization map dimension differs from data");
  } else {
    warn_if_unstandardized(data);
  }
  const bool apply_unmap = unmap != nullptr && !unmap->is_identity();

  // Row-major copies so the per-draw loop touches contiguous memory.
  std::vector<double> xc(static_cast<std::size_t>(n) * static_cast<std::size_t>(pc));
  for (std::int64_t i = 0; i < n; ++i)
    for (int j = 0; j < pc; ++j) xc[static_cast<std::size_t>(i) * pc + j] = data.x_cont(i, j);
  std::vector<std::int64_t> xd;
  if (pd > 0) {
    xd.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(pd));
    for (std::int64_t i = 0; i < n; ++i)
      for (int j = 0; j < pd; ++j) xd[static_cast<std::size_t>(i) * pd + j] = data.x_disc(i, j);
  }

  ApsResult result;
  result.values.resize(n);
  result.nondegenerate.assign(static_cast<std::size_t>(n), 0);
  result.delta = config.delta;
  result.draws = config.draws;
  result.seed = config.seed;

  const double delta = config.delta;
  const std::int64_t S = config.draws;
  const double inv_s = 1.0 / static_cast<double>(S);

  parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<double> pert(static_cast<std::size_t>(pc));
    std::vector<double> raw(static_cast<std::size_t>(pc));
    for (std::int64_t i = lo; i < hi; ++i) {
      RngStream g = make_stream(config.seed, static_cast<std::uint64_t>(i));
      const double* center = xc.data() + static_cast<std::size_t>(i) * pc;
      const std::int64_t* di = pd > 0 ? xd.data() + static_cast<std::size_t>(i) * pd : nullptr;
      double sum = 0.0;
      for (std::int64_t s = 0; s < S; ++s) {
        ball_point(center, pc, delta, g, pert.data());
        const double* eval_at = pert.data();
        if (apply_unmap) {
          for (int j = 0; j < pc; ++j) raw[j] = unmap->to_raw(j, pert[j]);
          eval_at = raw.data();
        }
        const double a = rule.evaluate_raw(eval_at, pc, di, pd);
        if (!(a >= 0.0 && a <= 1.0)) {
          fail(Errc::DomainError, "rule returned a value outside [0,1] during APS simulation");
        }
        sum += a;
      }
      const double v = sum * inv_s;
      result.values[i] = v;
      result.nondegenerate[static_cast<std::size_t>(i)] = (v > 0.0 && v < 1.0) ? 1 : 0;
    }
  });
  return result;
}

ApsResult exact_propensity(const Dataset& data, const DecisionRule& rule,
                           const StandardizationMap* unmap) {
  const std::int64_t n = data.n();
  const int pc = data.p_cont();
  const int pd = data.p_disc();
  const bool apply_unmap = unmap != nullptr && !unmap->is_identity();
  if (unmap != nullptr) {
    require(unmap->dim() == pc, Errc::DimensionMismatch,
            "standardization map dimension differs from data");
  }
  ApsResult result;
  result.values.resize(n);
  result.nondegenerate.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> raw(static_cast<std::size_t>(pc));
  std::vector<std::int64_t> drow(static_cast<std::size_t>(std::max(pd, 1)));
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < pd; ++j) drow[static_cast<std::size_t>(j)] = data.x_disc(i, j);
    double v;
    if (apply_unmap) {
      for (int j = 0; j < pc; ++j) raw[static_cast<std::size_t>(j)] = unmap->to_raw(j, data.x_cont(i, j));
      v = rule.evaluate(std::span<const double>(raw.data(), static_cast<std::size_t>(pc)),
                        std::span<const std::int64_t>(drow.data(), static_cast<std::size_t>(pd)));
    } else {
      std::vector<double> row(static_cast<std::size_t>(pc));
      for (int j = 0; j < pc; ++j) row[static_cast<std::size_t>(j)] = data.x_cont(i, j);
      v = rule.evaluate(std::span<const double>(row.data(), row.size()),
                        std::span<const std::int64_t>(drow.data(), static_cast<std::size_t>(pd)));
    }
    result.values[i] = v;
    result.nondegenerate[static_cast<std::size_t>(i)] = (v > 0.0 && v < 1.0) ? 1 : 0;
  }
  return result;
}

double analytic_aps_univariate_threshold(double x, double c, double delta) {
  require(delta > 0.0, Errc::DomainError, "delta must be > 0");
  const double t = (x - c) / (2.0 * delta) + 0.5;
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t;
}

}  // namespace apsiv
