#include "apsiv/mc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "apsiv/common.hpp"
#include "apsiv/rng.hpp"

namespace apsiv {

namespace {

constexpr std::uint64_t kRepTagBase = 1'000'000;
constexpr std::uint64_t kDeltaTagBase = 2'000;
constexpr const char* kEstimandNames[] = {"ate", "ate_rct", "late", "late_rct"};

bool mode_uses_aps(RegressionMode mode) {
  return mode == RegressionMode::TslsTreatment || mode == RegressionMode::OlsRecommendation;
}

// One (estimator, delta) column of the replication loop.
struct Column {
  RegressionMode mode;
  std::optional<double> delta;
  std::optional<int> delta_index;
};

struct ColumnDraw {
  bool ok = false;
  double beta1 = 0.0;
  double se = 0.0;
  std::int64_t n_used = 0;
};

struct RepResult {
  bool sample_ok = false;
  std::string error;
  double analogs[4] = {0, 0, 0, 0};  // ate, ate_rct, late, late_rct (may be NaN)
  std::vector<ColumnDraw> columns;
};

}  // namespace

void McConfig::validate() const {
  require(replications >= 2, Errc::ConfigError, "monte carlo needs replications >= 2");
  require(draws >= 1, Errc::ConfigError, "monte carlo needs draws >= 1");
  require(!estimators.empty(), Errc::ConfigError, "monte carlo needs at least one estimator");
  require(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0, Errc::ConfigError,
          "max_failure_fraction must be in [0,1]");
  bool needs_aps = false;
  for (RegressionMode m : estimators) {
    require(m != RegressionMode::OlsBalance, Errc::ConfigError,
            "balance regression needs an external covariate; it has no Monte Carlo column");
    needs_aps = needs_aps || mode_uses_aps(m);
  }
  require(!needs_aps || !deltas.empty(), Errc::ConfigError,
          "APS-based estimators need at least one delta");
  for (double d : deltas)
    require(d > 0.0 && std::isfinite(d), Errc::ConfigError, "deltas must be positive");
  for (const auto& [name, value] : estimand_overrides) {
    require(std::find(std::begin(kEstimandNames), std::end(kEstimandNames), name) !=
                std::end(kEstimandNames),
            Errc::ConfigError, "unknown estimand override '" + name + "'");
    (void)value;
  }
}

const McCell* McSummary::find(const std::string& estimator, const std::string& estimand,
                              std::optional<double> delta) const {
  for (const McCell& c : cells) {
    if (c.estimator != estimator || c.estimand != estimand) continue;
    if (delta.has_value() != c.delta.has_value()) continue;
    if (delta.has_value() && *c.delta != *delta) continue;
    return &c;
  }
  return nullptr;
}

McSummary run_monte_carlo(const SampleSource& source, const McConfig& config) {
  config.validate();
  const std::int64_t R = config.replications;

  std::vector<Column> columns;
  for (RegressionMode m : config.estimators) {
    if (mode_uses_aps(m)) {
      for (std::size_t k = 0; k < config.deltas.size(); ++k)
        columns.push_back({m, config.deltas[k], static_cast<int>(k)});
    } else {
      columns.push_back({m, std::nullopt, std::nullopt});
    }
  }

  std::vector<RepResult> reps(static_cast<std::size_t>(R));
  const int threads = resolve_threads(config.threads);

  parallel_for(R, threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      RepResult& rep = reps[static_cast<std::size_t>(r)];
      rep.columns.resize(columns.size());
      const std::uint64_t rep_seed = derive_seed(config.seed, kRepTagBase + static_cast<std::uint64_t>(r));
      DgpSample sample;
      StandardizationMap map;
      Dataset sdata;
      try {
        sample = source(rep_seed);
        sample.data.validate();
        const OracleEstimands oracle = oracle_estimands(sample.pot, sample.data, sample.rule);
        rep.analogs[0] = oracle.ate;
        rep.analogs[1] = oracle.ate_rct;
        rep.analogs[2] = oracle.late;
        rep.analogs[3] = oracle.late_rct;
        std::tie(sdata, map) = standardize(sample.data);
        rep.sample_ok = true;
      } catch (const std::exception& e) {
        rep.error = e.what();
        continue;
      }

      // One APS pass per delta, shared by every estimator that consumes it.
      std::vector<ApsResult> aps(config.deltas.size());
      std::vector<std::string> aps_error(config.deltas.size());
      for (std::size_t k = 0; k < config.deltas.size(); ++k) {
        bool needed = false;
        for (const Column& c : columns) needed = needed || (c.delta_index && *c.delta_index == static_cast<int>(k));
        if (!needed) continue;
        try {
          ApsConfig ac;
          ac.delta = config.deltas[k];
          ac.draws = config.draws;
          ac.seed = derive_seed(rep_seed, kDeltaTagBase + static_cast<std::uint64_t>(k));
          aps[k] = simulate_aps(sdata, sample.rule, ac, &map, /*threads=*/1);
        } catch (const std::exception& e) {
          aps_error[k] = e.what();
        }
      }

      for (std::size_t c = 0; c < columns.size(); ++c) {
        const Column& col = columns[c];
        ColumnDraw& draw = rep.columns[c];
        try {
          EstimateReport report;
          if (col.delta_index) {
            const std::size_t k = static_cast<std::size_t>(*col.delta_index);
            if (!aps_error[k].empty()) throw Error(Errc::DomainError, aps_error[k]);
            report = run_regression(sample.data, aps[k], col.mode);
          } else {
            report = col.mode == RegressionMode::OlsNaive ? naive_ols(sample.data)
                                                          : naive_tsls(sample.data);
          }
          draw.ok = true;
          draw.beta1 = report.beta1;
          draw.se = report.se_robust;
          draw.n_used = report.n_used;
        } catch (const std::exception& e) {
          if (rep.error.empty()) rep.error = e.what();
        }
      }
    }
  });

  McSummary out;
  out.replications = R;
  for (const RepResult& rep : reps) {
    const bool all_ok =
        rep.sample_ok && std::all_of(rep.columns.begin(), rep.columns.end(),
                                     [](const ColumnDraw& d) { return d.ok; });
    if (!all_ok) {
      ++out.failures;
      if (!rep.error.empty() && out.failure_messages.size() < 8 &&
          std::find(out.failure_messages.begin(), out.failure_messages.end(), rep.error) ==
              out.failure_messages.end())
        out.failure_messages.push_back(rep.error);
    }
  }
  if (static_cast<double>(out.failures) >
      config.max_failure_fraction * static_cast<double>(R) + 1e-12) {
    std::string detail = "monte carlo: " + std::to_string(out.failures) + " of " +
                         std::to_string(R) + " replications failed";
    for (const std::string& m : out.failure_messages) detail += "; " + m;
    fail(Errc::TooManyFailures, detail);
  }

  // Per-estimand targets: overrides win; otherwise the mean of sample analogs
  // over replications that produced a sample (NaN analogs skipped).
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double targets[4];
  for (int e = 0; e < 4; ++e) {
    const auto it = config.estimand_overrides.find(kEstimandNames[e]);
    if (it != config.estimand_overrides.end()) {
      targets[e] = it->second;
      continue;
    }
    double sum = 0.0;
    std::int64_t count = 0;
    for (const RepResult& rep : reps) {
      if (!rep.sample_ok || std::isnan(rep.analogs[e])) continue;
      sum += rep.analogs[e];
      ++count;
    }
    targets[e] = count > 0 ? sum / static_cast<double>(count) : nan;
  }

  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::vector<const ColumnDraw*> valid;
    for (const RepResult& rep : reps)
      if (rep.sample_ok && rep.columns[c].ok) valid.push_back(&rep.columns[c]);
    const auto r_used = static_cast<std::int64_t>(valid.size());

    double mean_beta = nan, sd = nan, avg_n = nan;
    if (r_used > 0) {
      double sum = 0.0, nsum = 0.0;
      for (const ColumnDraw* d : valid) {
        sum += d->beta1;
        nsum += static_cast<double>(d->n_used);
      }
      mean_beta = sum / static_cast<double>(r_used);
      avg_n = nsum / static_cast<double>(r_used);
      double ss = 0.0;
      for (const ColumnDraw* d : valid) {
        const double dev = d->beta1 - mean_beta;
        ss += dev * dev;
      }
      sd = std::sqrt(ss / static_cast<double>(r_used));
    }

    for (int e = 0; e < 4; ++e) {
      McCell cell;
      cell.estimator = regression_mode_name(columns[c].mode);
      cell.estimand = kEstimandNames[e];
      cell.delta = columns[c].delta;
      cell.target = targets[e];
      cell.replications_used = r_used;
      cell.sd = sd;
      cell.avg_n_used = avg_n;
      if (r_used > 0 && !std::isnan(targets[e])) {
        cell.bias = mean_beta - targets[e];
        cell.rmse = std::sqrt(cell.bias * cell.bias + sd * sd);
        std::int64_t covered = 0;
        for (const ColumnDraw* d : valid)
          if (std::abs(targets[e] - d->beta1) <= 1.96 * d->se) ++covered;
        cell.coverage = static_cast<double>(covered) / static_cast<double>(r_used);
      } else {
        cell.bias = nan;
        cell.rmse = nan;
        cell.coverage = nan;
      }
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

McSummary run_monte_carlo(const DgpConfig& dgp, const McConfig& config) {
  const DgpPopulation pop = build_population(dgp);
  return run_monte_carlo(
      [&pop](std::uint64_t rep_seed) { return generate_sample(pop, rep_seed); }, config);
}

}  // namespace apsiv
