#include "apsiv/estimators.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "apsiv/rng.hpp"

namespace apsiv {

const char* regression_mode_name(RegressionMode mode) {
  switch (mode) {
    case RegressionMode::TslsTreatment: return "aps_2sls";
    case RegressionMode::OlsRecommendation: return "aps_ols";
    case RegressionMode::OlsBalance: return "balance";
    case RegressionMode::OlsNaive: return "naive_ols";
    case RegressionMode::TslsNaive: return "naive_2sls";
  }
  return "unknown";
}

namespace {

constexpr double kRcondThreshold = 1e-12;

struct Fit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
};

// Exactly-identified IV fit with HC0 sandwich:
//   beta = (Z'X)^-1 Z'y,  vcov = (Z'X)^-1 (sum e_i^2 z_i z_i') (X'Z)^-1.
// OLS is the special case Z == X. The k x k cross-moment solve goes through an
// SVD so the reciprocal condition number is available for the singularity gate.
Fit iv_fit(const Eigen::MatrixXd& zm, const Eigen::MatrixXd& xm, const Eigen::VectorXd& y,
           Errc singular_code) {
  const Eigen::MatrixXd a = zm.transpose() * xm;
  const Eigen::VectorXd b = zm.transpose() * y;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  require(smax > 0.0 && smin / smax >= kRcondThreshold, singular_code,
          "cross-moment matrix numerically singular (rcond below 1e-12); "
          "instrument or regressor has no usable variation");
  Fit fit;
  fit.beta = svd.solve(b);
  const Eigen::VectorXd resid = y - xm * fit.beta;
  const Eigen::MatrixXd meat =
      zm.transpose() * resid.array().square().matrix().asDiagonal() * zm;
  const Eigen::MatrixXd a_inv =
      svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  fit.vcov = a_inv * meat * a_inv.transpose();
  return fit;
}

std::vector<double> diag_se(const Eigen::MatrixXd& vcov) {
  std::vector<double> se(static_cast<std::size_t>(vcov.rows()));
  for (Eigen::Index i = 0; i < vcov.rows(); ++i) se[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, vcov(i, i)));
  return se;
}

// Shared body for the APS-controlled modes. `main_reg` is the column whose
// coefficient is reported (D or Z); `main_inst` is its instrument (Z).
EstimateReport aps_regression(const Dataset& data, const Eigen::VectorXd& outcome,
                              const Eigen::VectorXd& main_reg, const Eigen::VectorXd& main_inst,
                              const ApsResult& aps, RegressionMode mode, InterceptPolicy intercept,
                              const char* main_name) {
  const std::int64_t n = data.n();
  require(aps.values.size() == n, Errc::DimensionMismatch, "aps result length differs from data");
  require(outcome.size() == n, Errc::DimensionMismatch, "outcome length differs from data");

  std::vector<std::int64_t> used;
  used.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    if (aps.nondegenerate[static_cast<std::size_t>(i)]) used.push_back(i);
  require(!used.empty(), Errc::NoNondegenerateRows,
          "no rows with simulated APS strictly inside (0,1)");

  bool drop_intercept = false;
  if (intercept == InterceptPolicy::Auto) {
    // Sample degenerates to a single score value q in (0,1): the constant column
    // would duplicate q * (the aps column), so it is dropped.
    drop_intercept = true;
    const double first = aps.values[used.front()];
    for (std::int64_t i : used) {
      if (aps.values[i] != first) {
        drop_intercept = false;
        break;
      }
    }
  }

  const auto m = static_cast<Eigen::Index>(used.size());
  const int k = drop_intercept ? 2 : 3;
  Eigen::MatrixXd zm(m, k), xm(m, k);
  Eigen::VectorXd yv(m), dv(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::int64_t i = used[static_cast<std::size_t>(r)];
    int c = 0;
    if (!drop_intercept) {
      zm(r, c) = 1.0;
      xm(r, c) = 1.0;
      ++c;
    }
    zm(r, c) = main_inst[i];
    xm(r, c) = main_reg[i];
    ++c;
    zm(r, c) = aps.values[i];
    xm(r, c) = aps.values[i];
    yv(r) = outcome[i];
    dv(r) = main_reg[i];
  }

  const Fit fit = iv_fit(zm, xm, yv, Errc::WeakDesignSingular);
  const int main_idx = drop_intercept ? 0 : 1;

  EstimateReport rep;
  rep.mode = mode;
  rep.beta1 = fit.beta(main_idx);
  rep.se_robust = std::sqrt(std::max(0.0, fit.vcov(main_idx, main_idx)));
  rep.coefficients.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
  rep.se_all = diag_se(fit.vcov);
  if (!drop_intercept) rep.coef_names.push_back("intercept");
  rep.coef_names.push_back(main_name);
  rep.coef_names.push_back("aps");
  rep.n_total = n;
  rep.n_used = static_cast<std::int64_t>(used.size());
  rep.intercept_dropped = drop_intercept;
  rep.delta = aps.delta;
  rep.draws = aps.draws;

  if (mode == RegressionMode::TslsTreatment) {
    const Fit first_stage = iv_fit(zm, zm, dv, Errc::WeakDesignSingular);
    rep.has_first_stage = true;
    rep.first_stage_gamma1 = first_stage.beta(main_idx);
    rep.first_stage_se = std::sqrt(std::max(0.0, first_stage.vcov(main_idx, main_idx)));
  }
  return rep;
}

}  // namespace

EstimateReport tsls_aps(const Dataset& data, const ApsResult& aps, InterceptPolicy intercept) {
  return aps_regression(data, data.y, data.d, data.z, aps, RegressionMode::TslsTreatment,
                        intercept, "d");
}

EstimateReport ols_recommendation(const Dataset& data, const ApsResult& aps,
                                  InterceptPolicy intercept) {
  return aps_regression(data, data.y, data.z, data.z, aps, RegressionMode::OlsRecommendation,
                        intercept, "z");
}

EstimateReport ols_balance(const Dataset& data, const Eigen::VectorXd& w, const ApsResult& aps,
                           InterceptPolicy intercept) {
  return aps_regression(data, w, data.z, data.z, aps, RegressionMode::OlsBalance, intercept, "z");
}

namespace {

EstimateReport naive_fit(const Dataset& data, bool instrumented) {
  const std::int64_t n = data.n();
  require(n >= 2, Errc::EmptyDataset, "naive regression needs n >= 2");
  Eigen::MatrixXd xm(n, 2), zm(n, 2);
  for (std::int64_t i = 0; i < n; ++i) {
    xm(i, 0) = 1.0;
    xm(i, 1) = data.d[i];
    zm(i, 0) = 1.0;
    zm(i, 1) = instrumented ? data.z[i] : data.d[i];
  }
  const Fit fit = iv_fit(zm, xm, data.y, Errc::SingularDesign);

  EstimateReport rep;
  rep.mode = instrumented ? RegressionMode::TslsNaive : RegressionMode::OlsNaive;
  rep.beta1 = fit.beta(1);
  rep.se_robust = std::sqrt(std::max(0.0, fit.vcov(1, 1)));
  rep.coefficients.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
  rep.se_all = diag_se(fit.vcov);
  rep.coef_names = {"intercept", "d"};
  rep.n_total = n;
  rep.n_used = n;
  if (instrumented) {
    const Fit first_stage = iv_fit(zm, zm, data.d, Errc::SingularDesign);
    rep.has_first_stage = true;
    rep.first_stage_gamma1 = first_stage.beta(1);
    rep.first_stage_se = std::sqrt(std::max(0.0, first_stage.vcov(1, 1)));
  }
  return rep;
}

}  // namespace

EstimateReport naive_ols(const Dataset& data) { return naive_fit(data, false); }

EstimateReport naive_tsls(const Dataset& data) { return naive_fit(data, true); }

EstimateReport run_regression(const Dataset& data, const ApsResult& aps, RegressionMode mode,
                              InterceptPolicy intercept) {
  switch (mode) {
    case RegressionMode::TslsTreatment: return tsls_aps(data, aps, intercept);
    case RegressionMode::OlsRecommendation: return ols_recommendation(data, aps, intercept);
    case RegressionMode::OlsNaive: return naive_ols(data);
    case RegressionMode::TslsNaive: return naive_tsls(data);
    case RegressionMode::OlsBalance:
      fail(Errc::ConfigError, "balance regression needs a covariate column; call ols_balance");
  }
  fail(Errc::ConfigError, "unknown regression mode");
}

std::vector<SweepEntry> bandwidth_sweep(const Dataset& data, const DecisionRule& rule,
                                        const std::vector<double>& deltas, std::int64_t draws,
                                        std::uint64_t seed, const StandardizationMap* unmap,
                                        RegressionMode mode, int threads) {
  require(!deltas.empty(), Errc::ConfigError, "bandwidth sweep needs >= 1 delta");
  for (double d : deltas) require(d > 0.0, Errc::ConfigError, "bandwidths must be > 0");

  std::vector<SweepEntry> entries;
  entries.reserve(deltas.size());
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    SweepEntry entry;
    entry.delta = deltas[k];
    try {
      ApsConfig cfg;
      cfg.delta = deltas[k];
      cfg.draws = draws;
      cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(k));
      const ApsResult aps = simulate_aps(data, rule, cfg, unmap, threads);
      entry.report = run_regression(data, aps, mode);
    } catch (const Error& e) {
      entry.error = e.what();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

}  // namespace apsiv
