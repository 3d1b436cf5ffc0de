#include "apsiv/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "apsiv/aps.hpp"
#include "apsiv/estimators.hpp"
#include "apsiv/rng.hpp"

namespace apsiv {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Seed namespace separating the CLI's per-delta APS streams from the DGP's
// internal streams (both hang off the user-facing seed).
constexpr std::uint64_t kApsSeedTag = 0xA5EED;

// ---------------------------------------------------------------------------
// Deterministic JSON emission: fixed key order (insertion order), two-space
// indentation, floats at 17 significant digits, NaN/Inf as null.
// ---------------------------------------------------------------------------

class JsonWriter {
 public:
  std::string take() {
    out_ += '\n';
    return std::move(out_);
  }

  void begin_object() {
    value_prefix();
    out_ += '{';
    levels_.push_back(true);
  }
  void end_object() { close('}'); }
  void begin_array() {
    value_prefix();
    out_ += '[';
    levels_.push_back(true);
  }
  void end_array() { close(']'); }

  void key(const std::string& k) {
    element_prefix();
    out_ += '"';
    append_escaped(k);
    out_ += "\": ";
    pending_value_ = true;
  }
  void value_string(const std::string& s) {
    value_prefix();
    out_ += '"';
    append_escaped(s);
    out_ += '"';
  }
  void value_double(double v) {
    if (!std::isfinite(v)) {
      value_null();
      return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    value_prefix();
    out_ += buf;
  }
  void value_int(std::int64_t v) {
    value_prefix();
    out_ += std::to_string(v);
  }
  void value_uint(std::uint64_t v) {
    value_prefix();
    out_ += std::to_string(v);
  }
  void value_bool(bool b) {
    value_prefix();
    out_ += b ? "true" : "false";
  }
  void value_null() {
    value_prefix();
    out_ += "null";
  }

 private:
  void indent() { out_.append(2 * levels_.size(), ' '); }
  void element_prefix() {
    if (!levels_.back()) out_ += ',';
    levels_.back() = false;
    out_ += '\n';
    indent();
  }
  void value_prefix() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (levels_.empty()) return;  // root value
    element_prefix();
  }
  void close(char c) {
    const bool was_empty = levels_.back();
    levels_.pop_back();
    if (!was_empty) {
      out_ += '\n';
      indent();
    }
    out_ += c;
  }
  void append_escaped(const std::string& s) {
    for (char ch : s) {
      switch (ch) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\r': out_ += "\\r"; break;
        case '\t': out_ += "\\t"; break;
        default:
          if (static_cast<unsigned char>(ch) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(ch));
            out_ += buf;
          } else {
            out_ += ch;
          }
      }
    }
  }

  std::string out_;
  std::vector<bool> levels_;  // true = container still empty
  bool pending_value_ = false;
};

// ---------------------------------------------------------------------------
// JSON descriptor parsing (nlohmann only inside this translation unit)
// ---------------------------------------------------------------------------

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string(what) + ": invalid JSON: " + e.what());
  }
}

Eigen::VectorXd vec_from(const json& a, const std::string& what) {
  require(a.is_array() && !a.empty(), Errc::ConfigError, what + " must be a nonempty array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].is_number(), Errc::ConfigError, what + " entries must be numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd mat_from(const json& a, const std::string& what) {
  require(a.is_array() && !a.empty(), Errc::ConfigError, what + " must be a nonempty array of rows");
  const Eigen::VectorXd first = vec_from(a[0], what + " row");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), first.size());
  m.row(0) = first;
  for (std::size_t i = 1; i < a.size(); ++i) {
    const Eigen::VectorXd row = vec_from(a[i], what + " row");
    require(row.size() == m.cols(), Errc::ConfigError, what + " rows must have equal length");
    m.row(static_cast<Eigen::Index>(i)) = row;
  }
  return m;
}

ScalarForm form_from(const json& j, const std::string& what) {
  require(j.is_object(), Errc::ConfigError, what + " must be an object {offset, weights, quad}");
  ScalarForm f;
  f.offset = j.value("offset", 0.0);
  if (j.contains("weights")) f.weights = vec_from(j.at("weights"), what + ".weights");
  if (j.contains("quad")) {
    f.quad = mat_from(j.at("quad"), what + ".quad");
    require(f.quad.rows() == f.quad.cols(), Errc::ConfigError, what + ".quad must be square");
  }
  return f;
}

Direction direction_from(const std::string& s, const std::string& what) {
  if (s == "ge" || s == ">=") return Direction::GE;
  if (s == "le" || s == "<=") return Direction::LE;
  fail(Errc::ConfigError, what + ": direction must be 'ge' or 'le', got '" + s + "'");
}

DecisionRule rule_from_descriptor(const json& j) {
  require(j.is_object() && j.contains("kind"), Errc::ConfigError,
          "rule descriptor must be an object with a 'kind'");
  const std::string kind = j.at("kind").get<std::string>();

  if (kind == "threshold") {
    require(j.contains("cutoff"), Errc::ConfigError, "threshold rule needs 'cutoff'");
    return make_threshold_rule(j.value("coord", 0), j.at("cutoff").get<double>(),
                               j.value("above", true));
  }
  if (kind == "affine_and") {
    require(j.contains("conditions"), Errc::ConfigError, "affine_and rule needs 'conditions'");
    AffineThresholdRule spec;
    for (const json& cj : j.at("conditions")) {
      AffineCondition c;
      require(cj.contains("weights"), Errc::ConfigError, "each condition needs 'weights'");
      c.weights = vec_from(cj.at("weights"), "condition.weights");
      c.offset = cj.value("offset", 0.0);
      c.direction = direction_from(cj.value("direction", std::string("ge")), "condition");
      spec.conditions.push_back(std::move(c));
    }
    const std::string comb = j.value("combinator", std::string("and"));
    require(comb == "and" || comb == "or", Errc::ConfigError,
            "combinator must be 'and' or 'or', got '" + comb + "'");
    spec.combinator = comb == "or" ? Combinator::OR : Combinator::AND;
    spec.inside_prob = j.value("inside_prob", 1.0);
    spec.outside_prob = j.value("outside_prob", 0.0);
    return make_affine_rule(std::move(spec));
  }
  if (kind == "epsilon_band") {
    for (const char* k : {"lo", "hi"})
      require(j.contains(k), Errc::ConfigError, std::string("epsilon_band rule needs '") + k + "'");
    require(j.contains("outside"), Errc::ConfigError,
            "epsilon_band rule needs an 'outside' scalar form");
    const int coord = j.value("coord", 0);
    const ScalarForm outside = form_from(j.at("outside"), "outside");
    int dim = j.value("dim", -1);
    if (dim < 0) dim = std::max(coord + 1, outside.min_dim());
    return make_band_rule(coord, j.at("lo").get<double>(), j.at("hi").get<double>(),
                          j.value("band_prob", 0.5), outside.fn(), dim);
  }
  if (kind == "thompson" || kind == "ucb") {
    for (const char* k : {"mu0", "mu1", "sigma0", "sigma1"})
      require(j.contains(k), Errc::ConfigError,
              kind + std::string(" rule needs scalar form '") + k + "'");
    const ScalarForm mu0 = form_from(j.at("mu0"), "mu0");
    const ScalarForm mu1 = form_from(j.at("mu1"), "mu1");
    const ScalarForm s0 = form_from(j.at("sigma0"), "sigma0");
    const ScalarForm s1 = form_from(j.at("sigma1"), "sigma1");
    int dim = j.value("dim", -1);
    if (dim < 0)
      dim = std::max({mu0.min_dim(), mu1.min_dim(), s0.min_dim(), s1.min_dim(), 1});
    if (kind == "thompson")
      return thompson_gaussian_rule(mu0.fn(), mu1.fn(), s0.fn(), s1.fn(), dim);
    require(j.contains("alpha"), Errc::ConfigError, "ucb rule needs 'alpha'");
    return ucb_rule(mu0.fn(), mu1.fn(), s0.fn(), s1.fn(), j.at("alpha").get<double>(), dim);
  }
  if (kind == "kmeans") {
    require(j.contains("centroids") && j.contains("targets"), Errc::ConfigError,
            "kmeans rule needs 'centroids' and 'targets'");
    const Eigen::MatrixXd m = mat_from(j.at("centroids"), "centroids");
    std::vector<Eigen::VectorXd> centroids;
    for (Eigen::Index i = 0; i < m.rows(); ++i) centroids.push_back(m.row(i).transpose());
    std::vector<int> targets;
    for (const json& t : j.at("targets")) {
      require(t.is_number_integer(), Errc::ConfigError, "targets must be integer indices");
      targets.push_back(t.get<int>());
    }
    return kmeans_target_rule(std::move(centroids), std::move(targets));
  }
  if (kind == "quadrant_tree") {
    require(j.contains("q1") && j.contains("q2"), Errc::ConfigError,
            "quadrant_tree rule needs 'q1' and 'q2'");
    return tree_rule_quadrant(j.at("q1").get<double>(), j.at("q2").get<double>());
  }
  if (kind == "cares") {
    CaresThresholds t;
    t.dpp_min = j.value("dpp_min", t.dpp_min);
    t.ucc_per_bed_min = j.value("ucc_per_bed_min", t.ucc_per_bed_min);
    t.margin_max = j.value("margin_max", t.margin_max);
    return cares_rule(t);
  }
  if (kind == "constant") {
    require(j.contains("p"), Errc::ConfigError, "constant rule needs 'p'");
    return constant_rule(j.at("p").get<double>());
  }
  fail(Errc::ConfigError, "unknown rule kind '" + kind + "'");
}

CsvSchema schema_from(const json& j) {
  CsvSchema s;
  if (j.is_null()) return s;
  require(j.is_object(), Errc::ConfigError, "'columns' must be an object");
  s.outcome = j.value("outcome", s.outcome);
  s.treatment = j.value("treatment", s.treatment);
  s.instrument = j.value("instrument", s.instrument);
  if (j.contains("continuous")) s.continuous = j.at("continuous").get<std::vector<std::string>>();
  if (j.contains("discrete")) s.discrete = j.at("discrete").get<std::vector<std::string>>();
  s.balance = j.value("balance", s.balance);
  return s;
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

struct EstimateRow {
  std::string name;
  std::optional<double> delta;
  std::optional<EstimateReport> report;
  std::string error;
  std::optional<Errc> errc;
};

// CSV cell for an optional/NaN-able number: empty when missing.
std::string csv_num(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string render_aps_csv(const std::vector<double>& deltas, const std::vector<ApsResult>& aps,
                           std::int64_t n) {
  std::string out = "row";
  for (double d : deltas) {
    out += ",aps_" + format_double(d);
    out += ",nondegenerate_" + format_double(d);
  }
  out += "\n";
  for (std::int64_t i = 0; i < n; ++i) {
    out += std::to_string(i + 1);
    for (const ApsResult& a : aps) {
      out += ",";
      out += format_double(a.values[i]);
      out += ",";
      out += a.nondegenerate[static_cast<std::size_t>(i)] ? "1" : "0";
    }
    out += "\n";
  }
  return out;
}

std::string render_estimates_json(const std::string& mode_label, std::int64_t n,
                                  std::uint64_t seed, std::int64_t draws,
                                  const std::vector<double>& deltas,
                                  const std::vector<EstimateRow>& rows) {
  JsonWriter w;
  w.begin_object();
  w.key("mode");
  w.value_string(mode_label);
  w.key("n");
  w.value_int(n);
  w.key("seed");
  w.value_uint(seed);
  w.key("draws");
  w.value_int(draws);
  w.key("deltas");
  w.begin_array();
  for (double d : deltas) w.value_double(d);
  w.end_array();
  w.key("estimates");
  w.begin_array();
  for (const EstimateRow& row : rows) {
    w.begin_object();
    w.key("estimator");
    w.value_string(row.name);
    w.key("delta");
    if (row.delta) w.value_double(*row.delta);
    else w.value_null();
    w.key("error");
    if (row.error.empty()) w.value_null();
    else w.value_string(row.error);
    if (row.report) {
      const EstimateReport& r = *row.report;
      w.key("n_total");
      w.value_int(r.n_total);
      w.key("n_used");
      w.value_int(r.n_used);
      w.key("intercept_dropped");
      w.value_bool(r.intercept_dropped);
      w.key("beta1");
      w.value_double(r.beta1);
      w.key("se_robust");
      w.value_double(r.se_robust);
      w.key("coefficients");
      w.begin_array();
      for (std::size_t k = 0; k < r.coef_names.size(); ++k) {
        w.begin_object();
        w.key("name");
        w.value_string(r.coef_names[k]);
        w.key("estimate");
        w.value_double(r.coefficients[k]);
        w.key("se");
        w.value_double(r.se_all[k]);
        w.end_object();
      }
      w.end_array();
      w.key("first_stage");
      if (r.has_first_stage) {
        w.begin_object();
        w.key("gamma1");
        w.value_double(r.first_stage_gamma1);
        w.key("se");
        w.value_double(r.first_stage_se);
        w.end_object();
      } else {
        w.value_null();
      }
    }
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.take();
}

std::string render_sweep_csv(const std::vector<EstimateRow>& rows) {
  std::string out =
      "estimator,delta,n_total,n_used,intercept_dropped,beta1,se_robust,"
      "first_stage_gamma1,first_stage_se,error\n";
  for (const EstimateRow& row : rows) {
    out += row.name;
    out += ",";
    out += row.delta ? format_double(*row.delta) : std::string();
    if (row.report) {
      const EstimateReport& r = *row.report;
      out += "," + std::to_string(r.n_total);
      out += "," + std::to_string(r.n_used);
      out += r.intercept_dropped ? ",1" : ",0";
      out += "," + format_double(r.beta1);
      out += "," + format_double(r.se_robust);
      out += ",";
      out += r.has_first_stage ? format_double(r.first_stage_gamma1) : std::string();
      out += ",";
      out += r.has_first_stage ? format_double(r.first_stage_se) : std::string();
      out += ",";
    } else {
      out += ",,,,,,,";
    }
    out += csv_escape(row.error);
    out += "\n";
  }
  return out;
}

std::string table_num(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string render_sweep_table(const std::vector<EstimateRow>& rows) {
  // One block per estimator; columns are bandwidths (single column for the
  // naive modes).
  std::ostringstream out;
  std::vector<std::string> order;
  for (const EstimateRow& r : rows)
    if (std::find(order.begin(), order.end(), r.name) == order.end()) order.push_back(r.name);

  for (const std::string& name : order) {
    std::vector<const EstimateRow*> cols;
    for (const EstimateRow& r : rows)
      if (r.name == name) cols.push_back(&r);

    out << "estimator: " << name << "\n";
    out << "  " << std::left << std::setw(14) << "metric";
    for (const EstimateRow* r : cols) {
      std::string label = r->delta ? "delta=" + table_num(*r->delta) : std::string("(full)");
      out << std::setw(18) << label;
    }
    out << "\n";
    const auto metric_row = [&](const char* label, auto getter) {
      out << "  " << std::setw(14) << label;
      for (const EstimateRow* r : cols)
        out << std::setw(18) << (r->report ? getter(*r->report) : std::string("ERR"));
      out << "\n";
    };
    metric_row("first_stage", [](const EstimateReport& r) {
      return r.has_first_stage ? table_num(r.first_stage_gamma1) : std::string("-");
    });
    metric_row("coefficient", [](const EstimateReport& r) { return table_num(r.beta1); });
    metric_row("robust_se", [](const EstimateReport& r) { return table_num(r.se_robust); });
    metric_row("n_used", [](const EstimateReport& r) { return std::to_string(r.n_used); });
    for (const EstimateRow* r : cols)
      if (!r->error.empty()) {
        out << "  error";
        if (r->delta) out << "[delta=" << table_num(*r->delta) << "]";
        out << ": " << r->error << "\n";
      }
    out << "\n";
  }
  return out.str();
}

std::string render_mc_csv(const McSummary& s) {
  std::string out =
      "estimator,delta,estimand,target,bias,sd,rmse,coverage,avg_n_used,replications_used\n";
  for (const McCell& c : s.cells) {
    out += c.estimator;
    out += ",";
    out += c.delta ? format_double(*c.delta) : std::string();
    out += "," + c.estimand;
    out += "," + csv_num(c.target);
    out += "," + csv_num(c.bias);
    out += "," + csv_num(c.sd);
    out += "," + csv_num(c.rmse);
    out += "," + csv_num(c.coverage);
    out += "," + csv_num(c.avg_n_used);
    out += "," + std::to_string(c.replications_used);
    out += "\n";
  }
  return out;
}

std::string render_mc_table(const McSummary& s) {
  std::ostringstream out;
  out << "Monte Carlo summary: " << s.replications << " replications, " << s.failures
      << " failed\n";
  for (const std::string& m : s.failure_messages) out << "  failure: " << m << "\n";
  out << "\n";

  // Column identities (estimator, delta) in first-appearance order.
  std::vector<std::pair<std::string, std::optional<double>>> cols;
  for (const McCell& c : s.cells) {
    const auto key = std::make_pair(c.estimator, c.delta);
    if (std::find(cols.begin(), cols.end(), key) == cols.end()) cols.push_back(key);
  }
  std::vector<std::string> estimands;
  for (const McCell& c : s.cells)
    if (std::find(estimands.begin(), estimands.end(), c.estimand) == estimands.end())
      estimands.push_back(c.estimand);

  for (const std::string& estimand : estimands) {
    const McCell* any = nullptr;
    for (const McCell& c : s.cells)
      if (c.estimand == estimand) {
        any = &c;
        break;
      }
    out << "target estimand: " << estimand << " (target = " << table_num(any->target) << ")\n";
    out << "  " << std::left << std::setw(12) << "metric";
    for (const auto& [name, delta] : cols) {
      std::string label = name;
      if (delta) label += " d=" + table_num(*delta);
      out << std::setw(22) << label;
    }
    out << "\n";
    const auto metric_row = [&](const char* label, auto getter) {
      out << "  " << std::setw(12) << label;
      for (const auto& [name, delta] : cols) {
        const McCell* cell = s.find(name, estimand, delta);
        out << std::setw(22) << (cell ? getter(*cell) : std::string("-"));
      }
      out << "\n";
    };
    metric_row("bias", [](const McCell& c) { return table_num(c.bias); });
    metric_row("sd", [](const McCell& c) { return table_num(c.sd); });
    metric_row("rmse", [](const McCell& c) { return table_num(c.rmse); });
    metric_row("coverage", [](const McCell& c) { return table_num(c.coverage); });
    metric_row("avg_n_used", [](const McCell& c) { return table_num(c.avg_n_used); });
    metric_row("reps_used",
               [](const McCell& c) { return std::to_string(c.replications_used); });
    out << "\n";
  }
  return out.str();
}

std::string render_mc_json(const McSummary& s, std::uint64_t seed, std::int64_t draws,
                           const std::vector<double>& deltas) {
  JsonWriter w;
  w.begin_object();
  w.key("mode");
  w.value_string("mc");
  w.key("seed");
  w.value_uint(seed);
  w.key("draws");
  w.value_int(draws);
  w.key("deltas");
  w.begin_array();
  for (double d : deltas) w.value_double(d);
  w.end_array();
  w.key("replications");
  w.value_int(s.replications);
  w.key("failures");
  w.value_int(s.failures);
  w.key("cells");
  w.begin_array();
  for (const McCell& c : s.cells) {
    w.begin_object();
    w.key("estimator");
    w.value_string(c.estimator);
    w.key("delta");
    if (c.delta) w.value_double(*c.delta);
    else w.value_null();
    w.key("estimand");
    w.value_string(c.estimand);
    w.key("target");
    w.value_double(c.target);
    w.key("bias");
    w.value_double(c.bias);
    w.key("sd");
    w.value_double(c.sd);
    w.key("rmse");
    w.value_double(c.rmse);
    w.key("coverage");
    w.value_double(c.coverage);
    w.key("avg_n_used");
    w.value_double(c.avg_n_used);
    w.key("replications_used");
    w.value_int(c.replications_used);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.take();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Errc::ConfigError, "cannot open output file '" + path.string() + "'");
  f << content;
  f.flush();
  require(f.good(), Errc::ConfigError, "failed writing '" + path.string() + "'");
}

std::int64_t default_draws(std::int64_t n) {
  return std::max<std::int64_t>(
      1000, static_cast<std::int64_t>(std::ceil(std::pow(static_cast<double>(n), 0.6))));
}

bool mode_needs_aps(RegressionMode m) {
  return m == RegressionMode::TslsTreatment || m == RegressionMode::OlsRecommendation ||
         m == RegressionMode::OlsBalance;
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

void run_single(const Dataset& data, const DecisionRule& rule, const Eigen::VectorXd* balance,
                const std::vector<RegressionMode>& modes, const RunConfig& cfg,
                const std::string& mode_label, std::ostream& out) {
  const std::int64_t n = data.n();
  const std::int64_t draws = cfg.draws > 0 ? cfg.draws : default_draws(n);
  const int threads = resolve_threads(threads_from_env());

  const bool needs_aps = std::any_of(modes.begin(), modes.end(), mode_needs_aps);
  require(!needs_aps || !cfg.deltas.empty(), Errc::ConfigError,
          "--deltas is required for APS-based estimators");
  for (double d : cfg.deltas)
    require(d > 0.0 && std::isfinite(d), Errc::ConfigError, "--deltas entries must be positive");
  const bool wants_balance =
      std::any_of(modes.begin(), modes.end(),
                  [](RegressionMode m) { return m == RegressionMode::OlsBalance; });
  if (wants_balance)
    require(balance != nullptr && balance->size() == n, Errc::ConfigError,
            "the balance estimator needs a 'balance' column in the rule descriptor");

  auto [sdata, map] = standardize(data);
  const std::uint64_t aps_base = derive_seed(cfg.seed, kApsSeedTag);
  std::vector<ApsResult> aps;
  for (std::size_t k = 0; k < cfg.deltas.size(); ++k) {
    ApsConfig ac;
    ac.delta = cfg.deltas[k];
    ac.draws = draws;
    ac.seed = derive_seed(aps_base, static_cast<std::uint64_t>(k));
    aps.push_back(simulate_aps(sdata, rule, ac, &map, threads));
  }

  std::vector<EstimateRow> rows;
  const auto estimate_one = [&](RegressionMode m, std::optional<std::size_t> k) {
    EstimateRow row;
    row.name = regression_mode_name(m);
    if (k) row.delta = cfg.deltas[*k];
    try {
      if (!k) {
        row.report = m == RegressionMode::OlsNaive ? naive_ols(data) : naive_tsls(data);
      } else if (m == RegressionMode::OlsBalance) {
        row.report = ols_balance(data, *balance, aps[*k]);
      } else {
        row.report = run_regression(data, aps[*k], m);
      }
    } catch (const Error& e) {
      row.error = e.what();
      row.errc = e.code();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  };
  for (RegressionMode m : modes) {
    if (mode_needs_aps(m)) {
      for (std::size_t k = 0; k < cfg.deltas.size(); ++k) estimate_one(m, k);
    } else {
      estimate_one(m, std::nullopt);
    }
  }

  const bool any_ok =
      std::any_of(rows.begin(), rows.end(), [](const EstimateRow& r) { return r.report.has_value(); });
  if (!any_ok && !rows.empty()) {
    const EstimateRow& first = rows.front();
    fail(first.errc.value_or(Errc::DomainError), "all estimators failed; first error: " + first.error);
  }

  const fs::path dir(cfg.out_dir);
  const std::string aps_csv = render_aps_csv(cfg.deltas, aps, n);
  const std::string estimates =
      render_estimates_json(mode_label, n, cfg.seed, draws, cfg.deltas, rows);
  const std::string sweep_csv = render_sweep_csv(rows);
  const std::string sweep_txt = render_sweep_table(rows);
  write_file(dir / "aps.csv", aps_csv);
  write_file(dir / "estimates.json", estimates);
  write_file(dir / "sweep.csv", sweep_csv);
  write_file(dir / "sweep.txt", sweep_txt);

  if (cfg.format == "json") out << estimates;
  else if (cfg.format == "csv") out << sweep_csv;
  else out << sweep_txt;
}

void run_mc(const DgpSpec& spec, const std::vector<RegressionMode>& modes, const RunConfig& cfg,
            std::ostream& out) {
  McConfig mc;
  mc.deltas = cfg.deltas;
  mc.draws = cfg.draws > 0 ? cfg.draws : default_draws(spec.config.n);
  mc.replications = spec.replications;
  mc.estimators = modes;
  mc.seed = cfg.seed;
  mc.threads = resolve_threads(threads_from_env());
  const McSummary summary = run_monte_carlo(spec.config, mc);

  const fs::path dir(cfg.out_dir);
  const std::string mc_csv = render_mc_csv(summary);
  const std::string mc_txt = render_mc_table(summary);
  write_file(dir / "mc_summary.csv", mc_csv);
  write_file(dir / "mc_summary.txt", mc_txt);

  if (cfg.format == "json") out << render_mc_json(summary, cfg.seed, mc.draws, cfg.deltas);
  else if (cfg.format == "csv") out << mc_csv;
  else out << mc_txt;
}

}  // namespace

std::string read_descriptor(const std::string& text_or_path) {
  if (!text_or_path.empty() && text_or_path.front() == '{') return text_or_path;
  std::ifstream in(text_or_path, std::ios::binary);
  require(in.good(), Errc::ConfigError, "cannot open descriptor file '" + text_or_path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RuleSpec rule_spec_from_json_text(const std::string& text) {
  const json j = parse_json(text, "rule descriptor");
  require(j.is_object() && j.contains("rule"), Errc::ConfigError,
          "rule descriptor must be an object with a 'rule' entry (and optional 'columns')");
  try {
    RuleSpec spec;
    spec.schema = schema_from(j.contains("columns") ? j.at("columns") : json());
    spec.rule = rule_from_descriptor(j.at("rule"));
    return spec;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string("rule descriptor: ") + e.what());
  }
}

DecisionRule rule_from_json_text(const std::string& text) {
  const json j = parse_json(text, "rule descriptor");
  try {
    return rule_from_descriptor(j);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string("rule descriptor: ") + e.what());
  }
}

DgpSpec dgp_spec_from_json_text(const std::string& text, std::uint64_t seed) {
  const json j = parse_json(text, "dgp descriptor");
  require(j.is_object(), Errc::ConfigError, "dgp descriptor must be a JSON object");
  try {
    DgpSpec spec;
    spec.config.seed = seed;
    spec.config.n = j.value("n", spec.config.n);
    spec.config.p = j.value("p", spec.config.p);
    const std::string model = j.value("model", std::string("A"));
    require(model == "A" || model == "B", Errc::ConfigError,
            "dgp model must be 'A' or 'B', got '" + model + "'");
    spec.config.model = model == "A" ? DgpConfig::Model::A : DgpConfig::Model::B;
    if (j.contains("band")) {
      const json& b = j.at("band");
      require(b.is_array() && b.size() == 2, Errc::ConfigError,
              "dgp band must be [lower_q, upper_q]");
      spec.config.band_lo = b[0].get<double>();
      spec.config.band_hi = b[1].get<double>();
    }
    spec.config.surrogate_n = j.value("surrogate_n", spec.config.surrogate_n);
    spec.replications = j.value("replications", std::int64_t{1});
    require(spec.replications >= 1, Errc::ConfigError, "dgp replications must be >= 1");
    spec.config.validate();
    return spec;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(Errc::ConfigError, std::string("dgp descriptor: ") + e.what());
  }
}

RegressionMode regression_mode_from_name(const std::string& name) {
  if (name == "aps_2sls") return RegressionMode::TslsTreatment;
  if (name == "aps_ols") return RegressionMode::OlsRecommendation;
  if (name == "balance") return RegressionMode::OlsBalance;
  if (name == "naive_ols") return RegressionMode::OlsNaive;
  if (name == "naive_2sls") return RegressionMode::TslsNaive;
  fail(Errc::ConfigError,
       "unknown estimator '" + name +
           "' (expected aps_2sls, aps_ols, balance, naive_ols, or naive_2sls)");
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::DomainError:
    case Errc::NonpositiveVariance:
    case Errc::DuplicateCentroids:
    case Errc::InsufficientSurrogate:
      return 2;
    case Errc::EmptyDataset:
    case Errc::DimensionMismatch:
    case Errc::MissingColumn:
    case Errc::ParseError:
    case Errc::NonBinary:
    case Errc::NonpositiveBeds:
      return 3;
    case Errc::NoNondegenerateRows:
    case Errc::WeakDesignSingular:
    case Errc::SingularDesign:
    case Errc::NoCompliers:
    case Errc::TooManyFailures:
      return 4;
  }
  return 4;
}

void run(const RunConfig& cfg, std::ostream& out) {
  require(cfg.input.empty() != cfg.dgp.empty(), Errc::ConfigError,
          "exactly one of --input and --dgp is required");
  require(cfg.format == "json" || cfg.format == "csv" || cfg.format == "table", Errc::ConfigError,
          "--format must be json, csv, or table");
  require(!cfg.estimators.empty(), Errc::ConfigError, "at least one estimator is required");
  std::vector<RegressionMode> modes;
  for (const std::string& name : cfg.estimators) modes.push_back(regression_mode_from_name(name));

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  require(!ec, Errc::ConfigError, "cannot create output directory '" + cfg.out_dir + "'");

  if (!cfg.input.empty()) {
    require(!cfg.rule.empty(), Errc::ConfigError, "--rule is required with --input");
    const RuleSpec spec = rule_spec_from_json_text(read_descriptor(cfg.rule));
    const CsvDataset cd = ingest_csv(cfg.input, spec.schema);
    run_single(cd.data, spec.rule, cd.balance.size() > 0 ? &cd.balance : nullptr, modes, cfg,
               "csv", out);
  } else {
    require(cfg.rule.empty(), Errc::ConfigError,
            "--rule cannot be combined with --dgp (the generator defines its own rule)");
    const DgpSpec spec = dgp_spec_from_json_text(read_descriptor(cfg.dgp), cfg.seed);
    if (spec.replications > 1) {
      run_mc(spec, modes, cfg, out);
    } else {
      const DgpSample sample = generate_sample(spec.config);
      run_single(sample.data, sample.rule, nullptr, modes, cfg, "dgp", out);
    }
  }
}

int run_cli(const RunConfig& cfg, std::ostream& out) {
  try {
    run(cfg, out);
    return 0;
  } catch (const Error& e) {
    const int rc = exit_code_for(e.code());
    JsonWriter w;
    w.begin_object();
    w.key("error");
    w.begin_object();
    w.key("code");
    w.value_string(errc_name(e.code()));
    w.key("message");
    w.value_string(e.what());
    w.end_object();
    w.key("exit");
    w.value_int(rc);
    w.end_object();
    out << w.take();
    return rc;
  } catch (const std::exception& e) {
    JsonWriter w;
    w.begin_object();
    w.key("error");
    w.begin_object();
    w.key("code");
    w.value_string("Internal");
    w.key("message");
    w.value_string(e.what());
    w.end_object();
    w.key("exit");
    w.value_int(1);
    w.end_object();
    out << w.take();
    return 1;
  }
}

}  // namespace apsiv
