#include "apsiv/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "apsiv/rng.hpp"

namespace apsiv {

namespace {

// Stream tags under a population or sample seed; disjoint on purpose.
constexpr std::uint64_t kTagCovarianceEntries = 1;
constexpr std::uint64_t kTagAlpha = 2;
constexpr std::uint64_t kTagSurrogate = 3;
constexpr std::uint64_t kTagX = 10;
constexpr std::uint64_t kTagEps0 = 11;
constexpr std::uint64_t kTagEps1 = 12;
constexpr std::uint64_t kTagU = 13;
constexpr std::uint64_t kTagBandCoin = 14;

int scaled_index(int base_1indexed, int p) {
  return static_cast<int>(std::lround(static_cast<double>(base_1indexed) * p / 100.0));
}

// Off-diagonal sparsity pattern of the covariance factor, proportional to the
// reference {2..6} x {35,66,78} layout at p=100. Coordinate 1 stays out of the
// pattern so the randomized-band variable remains uncorrelated.
void covariance_pattern(int p, std::vector<int>* rows, std::vector<int>* cols) {
  int row_lo = std::max(2, scaled_index(2, p));
  int row_hi = std::max(row_lo, std::min(p, scaled_index(6, p)));
  rows->clear();
  for (int r = row_lo; r <= row_hi; ++r) rows->push_back(r);
  cols->clear();
  for (int base : {35, 66, 78}) {
    int c = std::clamp(scaled_index(base, p), 2, p);
    if (std::find(cols->begin(), cols->end(), c) == cols->end()) cols->push_back(c);
  }
}

Eigen::MatrixXd draw_gaussian_matrix(std::int64_t rows, int cols, RngStream& g) {
  Eigen::MatrixXd m(rows, cols);
  for (std::int64_t i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g.normal();
  return m;
}

}  // namespace

void DgpConfig::validate() const {
  require(n >= 1 && p >= 1 && surrogate_n >= 1, Errc::ConfigError,
          "dgp needs n, p, surrogate_n >= 1");
  require(band_lo >= 0.0 && band_lo < band_hi && band_hi <= 1.0, Errc::ConfigError,
          "dgp band quantiles need 0 <= lo < hi <= 1");
}

double empirical_quantile(Eigen::VectorXd values, double q) {
  require(values.size() >= 1, Errc::EmptyDataset, "quantile of empty vector");
  require(q >= 0.0 && q <= 1.0, Errc::DomainError, "quantile level must be in [0,1]");
  std::sort(values.data(), values.data() + values.size());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

TauPredictor fit_tau_pred(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& z) {
  require(x.rows() == y.size() && x.rows() == z.size(), Errc::DimensionMismatch,
          "surrogate sample columns must share length");
  require(x.rows() >= 50, Errc::InsufficientSurrogate, "surrogate needs >= 50 rows");

  std::vector<int> idx1, idx0;
  for (Eigen::Index i = 0; i < z.size(); ++i) (z[i] == 1.0 ? idx1 : idx0).push_back(static_cast<int>(i));
  const RegressionTree::Params params{};
  require(static_cast<int>(idx1.size()) >= params.min_leaf &&
              static_cast<int>(idx0.size()) >= params.min_leaf,
          Errc::InsufficientSurrogate, "each recommendation arm needs >= min_leaf surrogate rows");

  const auto subsample = [&](const std::vector<int>& idx, Eigen::MatrixXd* xs, Eigen::VectorXd* ys) {
    xs->resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    ys->resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      xs->row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
      (*ys)[static_cast<Eigen::Index>(r)] = y[idx[r]];
    }
  };
  Eigen::MatrixXd x1, x0;
  Eigen::VectorXd y1, y0;
  subsample(idx1, &x1, &y1);
  subsample(idx0, &x0, &y0);
  return TauPredictor(RegressionTree::fit(x1, y1, params), RegressionTree::fit(x0, y0, params));
}

DgpPopulation build_population(const DgpConfig& config) {
  config.validate();
  const int p = config.p;

  DgpPopulation pop;
  pop.config = config;

  // Covariance factor: identity plus a small symmetric block of Unif(-.5,.5) entries.
  pop.v = Eigen::MatrixXd::Identity(p, p);
  std::vector<int> rows, cols;
  covariance_pattern(p, &rows, &cols);
  RngStream gv = make_stream(derive_seed(config.seed, kTagCovarianceEntries), 0);
  for (int r : rows) {
    for (int c : cols) {
      if (r == c) continue;
      const double val = gv.uniform(-0.5, 0.5);
      pop.v(r - 1, c - 1) = val;
      pop.v(c - 1, r - 1) = val;
    }
  }

  // Outcome coefficients: alpha1 fresh everywhere, alpha0 shares the first half,
  // both rescaled so Var(X'alpha) = alpha' (v v) alpha = |v alpha|^2 = 1.
  RngStream ga = make_stream(derive_seed(config.seed, kTagAlpha), 0);
  Eigen::VectorXd alpha1_raw(p), alpha0_raw(p);
  for (int j = 0; j < p; ++j) alpha1_raw[j] = ga.uniform(-150.0, 200.0);
  const int shared = p / 2;
  for (int j = 0; j < shared; ++j) alpha0_raw[j] = alpha1_raw[j];
  for (int j = shared; j < p; ++j) alpha0_raw[j] = ga.uniform(-100.0, 100.0);
  const double s0 = (pop.v * alpha0_raw).norm();
  const double s1 = (pop.v * alpha1_raw).norm();
  require(s0 > 0.0 && s1 > 0.0, Errc::ConfigError, "degenerate outcome coefficients");
  pop.alpha0 = alpha0_raw / s0;
  pop.alpha1 = alpha1_raw / s1;

  // Surrogate sample for the prediction function; fitted once, reused by every
  // replication. Its effect is always the half/half mix regardless of model.
  const std::uint64_t surr_seed = derive_seed(config.seed, kTagSurrogate);
  const std::int64_t sn = config.surrogate_n;
  RngStream gx = make_stream(derive_seed(surr_seed, kTagX), 0);
  RngStream ge0 = make_stream(derive_seed(surr_seed, kTagEps0), 0);
  RngStream ge1 = make_stream(derive_seed(surr_seed, kTagEps1), 0);
  RngStream gu = make_stream(derive_seed(surr_seed, kTagU), 0);
  RngStream gz = make_stream(derive_seed(surr_seed, kTagBandCoin), 0);

  const Eigen::MatrixXd xs = draw_gaussian_matrix(sn, p, gx) * pop.v;
  const Eigen::VectorXd xa0 = xs * pop.alpha0;
  const Eigen::VectorXd xa1 = xs * pop.alpha1;
  Eigen::VectorXd ys(sn), zs(sn);
  for (std::int64_t i = 0; i < sn; ++i) {
    const double y0 = config.y0_x_scale * xa0[i] + config.y0_noise_scale * ge0.normal();
    const double effect = config.surrogate_x_scale * xa1[i] + config.surrogate_noise_scale * ge1.normal();
    const double d1 = effect > gu.normal() ? 1.0 : 0.0;
    const double z = static_cast<double>(gz.bernoulli(0.5));
    const double d = z * d1;
    ys[i] = d == 1.0 ? y0 + effect : y0;
    zs[i] = z;
  }
  pop.tau_pred = fit_tau_pred(xs, ys, zs);
  return pop;
}

DgpSample generate_sample(const DgpPopulation& pop, std::uint64_t sample_seed) {
  const DgpConfig& cfg = pop.config;
  const std::int64_t n = cfg.n;
  const int p = cfg.p;

  RngStream gx = make_stream(derive_seed(sample_seed, kTagX), 0);
  RngStream ge0 = make_stream(derive_seed(sample_seed, kTagEps0), 0);
  RngStream ge1 = make_stream(derive_seed(sample_seed, kTagEps1), 0);
  RngStream gu = make_stream(derive_seed(sample_seed, kTagU), 0);
  RngStream gcoin = make_stream(derive_seed(sample_seed, kTagBandCoin), 0);

  DgpSample out;
  out.data.x_cont = draw_gaussian_matrix(n, p, gx) * pop.v;
  const Eigen::VectorXd xa0 = out.data.x_cont * pop.alpha0;
  const Eigen::VectorXd xa1 = cfg.model == DgpConfig::Model::B
                                  ? Eigen::VectorXd(out.data.x_cont * pop.alpha1)
                                  : Eigen::VectorXd();

  out.pot.y0.resize(n);
  out.pot.y1.resize(n);
  out.pot.d1.resize(n);
  out.pot.d0 = Eigen::VectorXd::Zero(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double y0 = cfg.y0_x_scale * xa0[i] + cfg.y0_noise_scale * ge0.normal();
    const double effect = cfg.model == DgpConfig::Model::A ? ge1.normal() : xa1[i];
    out.pot.y0[i] = y0;
    out.pot.y1[i] = y0 + effect;
    out.pot.d1[i] = effect > gu.normal() ? 1.0 : 0.0;
  }

  out.band_lo_value = empirical_quantile(out.data.x_cont.col(0), cfg.band_lo);
  out.band_hi_value = empirical_quantile(out.data.x_cont.col(0), cfg.band_hi);

  TauPredictor tau = pop.tau_pred;
  out.data.z.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double x1 = out.data.x_cont(i, 0);
    if (x1 >= out.band_lo_value && x1 <= out.band_hi_value) {
      out.data.z[i] = static_cast<double>(gcoin.bernoulli(0.5));
    } else {
      out.data.z[i] = tau(out.data.x_cont.row(i).data()) >= 0.0 ? 1.0 : 0.0;
    }
  }

  realize_observed(out.pot, out.data.z, &out.data.d, &out.data.y);

  out.rule = make_band_rule(
      0, out.band_lo_value, out.band_hi_value, 0.5,
      [tau](const double* x, int) { return tau(x); }, p);
  out.rule = out.rule.with_kind("dgp_band_tree");
  return out;
}

DgpSample generate_sample(const DgpConfig& config) {
  const DgpPopulation pop = build_population(config);
  return generate_sample(pop, derive_seed(config.seed, 0x5A11));
}

OracleEstimands oracle_estimands(const PotentialOutcomes& pot, const Dataset& data,
                                 const DecisionRule& rule, std::optional<double> delta,
                                 const ApsResult* aps_exact) {
  const std::int64_t n = data.n();
  require(pot.y1.size() == n && pot.y0.size() == n && pot.d1.size() == n && pot.d0.size() == n,
          Errc::DimensionMismatch, "potential outcomes must match dataset length");
  const int pc = data.p_cont();
  const int pd = data.p_disc();

  const double nan = std::numeric_limits<double>::quiet_NaN();
  OracleEstimands out;

  double sum_all = 0.0, sum_seg = 0.0, sum_c = 0.0, sum_c_seg = 0.0;
  std::int64_t n_seg = 0, n_c = 0, n_c_seg = 0;
  std::vector<double> row(static_cast<std::size_t>(pc));
  std::vector<std::int64_t> drow(static_cast<std::size_t>(std::max(pd, 1)));
  std::vector<std::uint8_t> in_segment(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < pc; ++j) row[static_cast<std::size_t>(j)] = data.x_cont(i, j);
    for (int j = 0; j < pd; ++j) drow[static_cast<std::size_t>(j)] = data.x_disc(i, j);
    const double a = rule.evaluate(std::span<const double>(row.data(), row.size()),
                                   std::span<const std::int64_t>(drow.data(), static_cast<std::size_t>(pd)));
    const bool seg = a > 0.0 && a < 1.0;
    in_segment[static_cast<std::size_t>(i)] = seg ? 1 : 0;
    const double effect = pot.y1[i] - pot.y0[i];
    const bool complier = pot.d1[i] != pot.d0[i];
    sum_all += effect;
    if (seg) {
      sum_seg += effect;
      ++n_seg;
    }
    if (complier) {
      sum_c += effect;
      ++n_c;
      if (seg) {
        sum_c_seg += effect;
        ++n_c_seg;
      }
    }
  }
  out.ate = sum_all / static_cast<double>(n);
  out.ate_rct = n_seg > 0 ? sum_seg / static_cast<double>(n_seg) : nan;
  require(n_c > 0, Errc::NoCompliers, "no compliers: D(1) = D(0) everywhere");
  out.late = sum_c / static_cast<double>(n_c);
  out.late_rct = n_c_seg > 0 ? sum_c_seg / static_cast<double>(n_c_seg) : nan;

  if (delta.has_value()) {
    require(*delta > 0.0, Errc::DomainError, "weighted estimand needs delta > 0");
    out.delta = *delta;
    if (aps_exact != nullptr) {
      require(aps_exact->values.size() == n, Errc::DimensionMismatch,
              "aps_exact length differs from data");
    }
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double pa;
      if (aps_exact != nullptr) {
        pa = aps_exact->values[i];
      } else {
        for (int j = 0; j < pc; ++j) row[static_cast<std::size_t>(j)] = data.x_cont(i, j);
        const auto analytic =
            rule.analytic_aps_fixed(std::span<const double>(row.data(), row.size()), *delta);
        require(analytic.has_value(), Errc::ConfigError,
                "rule has no analytic fixed-bandwidth APS; pass aps_exact (high-S simulation)");
        pa = *analytic;
      }
      const double w = pa * (1.0 - pa) * (pot.d1[i] - pot.d0[i]);
      num += w * (pot.y1[i] - pot.y0[i]);
      den += w;
    }
    if (den != 0.0) out.weighted_beta1 = num / den;
  }
  return out;
}

}  // namespace apsiv
