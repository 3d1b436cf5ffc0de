// Batch-run layer tests: descriptor parsing, the exit-code policy, end-to-end
// artifact generation checked against direct library computations, error
// envelopes, and byte-stability of artifacts (goldens, reruns, thread counts).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "apsiv/aps.hpp"
#include "apsiv/csv.hpp"
#include "apsiv/estimators.hpp"
#include "apsiv/rng.hpp"
#include "apsiv/runner.hpp"

using namespace apsiv;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<Errc> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: ", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fixture(const std::string& name) {
  return fs::path(APSIV_SOURCE_DIR) / "tests" / "fixtures" / name;
}

// Fresh scratch directory under the system temp root.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("apsiv_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the installed CLI binary; returns its exit status.
int run_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + APSIV_CLI_PATH + " " + args;
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WEXITSTATUS(rc);
}

// Seed namespace tag separating CLI APS streams from generator streams; part
// of the documented reproducibility contract.
constexpr std::uint64_t kApsSeedTag = 0xA5EED;

}  // namespace

TEST_CASE("descriptor text resolution: inline JSON versus file path") {
  CHECK(read_descriptor("{\"a\": 1}") == "{\"a\": 1}");
  const fs::path dir = scratch("descriptor");
  const fs::path file = dir / "desc.json";
  std::ofstream(file) << "{\"kind\": \"constant\", \"p\": 0.5}";
  CHECK(read_descriptor(file.string()) == "{\"kind\": \"constant\", \"p\": 0.5}");
  CHECK(thrown_code([&] { read_descriptor((dir / "absent.json").string()); }) ==
        Errc::ConfigError);
}

TEST_CASE("rule descriptors: every kind constructs and evaluates") {
  const auto eval = [](const std::string& text, std::vector<double> x) {
    const DecisionRule r = rule_from_json_text(text);
    return r.evaluate(std::span<const double>(x.data(), x.size()));
  };

  SUBCASE("threshold, both directions") {
    CHECK(eval(R"({"kind":"threshold","coord":0,"cutoff":1.0})", {1.5}) == 1.0);
    CHECK(eval(R"({"kind":"threshold","coord":0,"cutoff":1.0})", {0.5}) == 0.0);
    CHECK(eval(R"({"kind":"threshold","cutoff":1.0,"above":false})", {0.5}) == 1.0);
  }
  SUBCASE("affine with and/or combinators") {
    // Conditions read as w'x >= offset (or <= for "le").
    const std::string base = R"({"kind":"affine_and","conditions":[
      {"weights":[1,0],"offset":1,"direction":"ge"},
      {"weights":[0,1],"offset":1,"direction":"ge"}],
      "inside_prob":0.9,"outside_prob":0.1)";
    CHECK(eval(base + "}", {2.0, 2.0}) == 0.9);
    CHECK(eval(base + "}", {2.0, 0.0}) == 0.1);
    CHECK(eval(base + R"(,"combinator":"or"})", {2.0, 0.0}) == 0.9);
    CHECK(thrown_code([&] {
            rule_from_json_text(base + R"(,"combinator":"xor"})");
          }) == Errc::ConfigError);
  }
  SUBCASE("epsilon band with an outside scalar form") {
    const std::string text =
        R"({"kind":"epsilon_band","coord":0,"lo":-1,"hi":1,"outside":{"weights":[1]}})";
    CHECK(eval(text, {0.0}) == 0.5);
    CHECK(eval(text, {2.0}) == 1.0);
    CHECK(eval(text, {-2.0}) == 0.0);
  }
  SUBCASE("posterior-sampling rule hits the normal-CDF anchor") {
    const std::string text = R"({"kind":"thompson","mu0":{"offset":0},
      "mu1":{"weights":[1]},"sigma0":{"offset":3},"sigma1":{"offset":4}})";
    CHECK(std::abs(eval(text, {5.0}) - 0.8413447460685429) < 1e-12);
    CHECK(eval(text, {0.0}) == 0.5);
  }
  SUBCASE("confidence-bound rule is a hard indicator") {
    const std::string text = R"({"kind":"ucb","mu0":{"offset":0},"mu1":{"weights":[1]},
      "sigma0":{"offset":1},"sigma1":{"offset":1},"alpha":0})";
    CHECK(eval(text, {2.0}) == 1.0);
    CHECK(eval(text, {-2.0}) == 0.0);
  }
  SUBCASE("nearest-centroid targeting") {
    const std::string text =
        R"({"kind":"kmeans","centroids":[[-1,0],[1,0]],"targets":[1]})";
    CHECK(eval(text, {2.0, 0.0}) == 1.0);
    CHECK(eval(text, {-2.0, 0.0}) == 0.0);
  }
  SUBCASE("quadrant classifier levels") {
    const std::string text = R"({"kind":"quadrant_tree","q1":0.2,"q2":0.8})";
    CHECK(eval(text, {1.0, 1.0}) == 0.8);
    CHECK(eval(text, {-1.0, 1.0}) == 0.2);
  }
  SUBCASE("relief-eligibility rule with default and custom thresholds") {
    CHECK(eval(R"({"kind":"cares"})", {0.25, 30000.0, 0.0}) == 1.0);
    CHECK(eval(R"({"kind":"cares"})", {0.25, 30000.0, 0.05}) == 0.0);
    CHECK(eval(R"({"kind":"cares","margin_max":0.06})", {0.25, 30000.0, 0.05}) == 1.0);
  }
  SUBCASE("constant rule") {
    CHECK(eval(R"({"kind":"constant","p":0.25})", {7.0}) == 0.25);
  }
  SUBCASE("malformed descriptors are config errors") {
    CHECK(thrown_code([&] { rule_from_json_text("not json at all"); }) == Errc::ConfigError);
    CHECK(thrown_code([&] { rule_from_json_text(R"({"cutoff":1.0})"); }) == Errc::ConfigError);
    CHECK(thrown_code([&] { rule_from_json_text(R"({"kind":"nope"})"); }) == Errc::ConfigError);
    CHECK(thrown_code([&] { rule_from_json_text(R"({"kind":"threshold"})"); }) ==
          Errc::ConfigError);
    CHECK(thrown_code([&] {
            rule_from_json_text(R"({"kind":"kmeans","centroids":[[0,0]],"targets":[0.5]})");
          }) == Errc::ConfigError);
  }
}

TEST_CASE("rule spec: column roles ride along with the rule") {
  const std::string text = R"({
    "columns": {"outcome":"out","treatment":"treat","instrument":"rec",
                "continuous":["a","b"],"discrete":["g"],"balance":"w"},
    "rule": {"kind":"constant","p":0.5}})";
  const RuleSpec spec = rule_spec_from_json_text(text);
  CHECK(spec.schema.outcome == "out");
  CHECK(spec.schema.treatment == "treat");
  CHECK(spec.schema.instrument == "rec");
  CHECK(spec.schema.continuous == std::vector<std::string>{"a", "b"});
  CHECK(spec.schema.discrete == std::vector<std::string>{"g"});
  CHECK(spec.schema.balance == "w");
  CHECK(spec.rule.kind() == "constant");

  CHECK(thrown_code([&] { rule_spec_from_json_text(R"({"kind":"constant","p":0.5})"); }) ==
        Errc::ConfigError);  // missing the "rule" entry
  const RuleSpec bare = rule_spec_from_json_text(R"({"rule":{"kind":"constant","p":0.5}})");
  CHECK(bare.schema.outcome == "y");  // defaults survive when columns are omitted
}

TEST_CASE("generator descriptors: fields, seed injection, validation") {
  const DgpSpec spec = dgp_spec_from_json_text(
      R"({"n":500,"p":7,"model":"B","band":[0.4,0.6],"surrogate_n":800,"replications":3})", 99);
  CHECK(spec.config.n == 500);
  CHECK(spec.config.p == 7);
  CHECK(spec.config.model == DgpConfig::Model::B);
  CHECK(spec.config.band_lo == 0.4);
  CHECK(spec.config.band_hi == 0.6);
  CHECK(spec.config.surrogate_n == 800);
  CHECK(spec.config.seed == 99);
  CHECK(spec.replications == 3);

  const DgpSpec defaults = dgp_spec_from_json_text(R"({"n":100,"p":2})", 1);
  CHECK(defaults.config.model == DgpConfig::Model::A);
  CHECK(defaults.replications == 1);

  CHECK(thrown_code([&] { dgp_spec_from_json_text(R"({"model":"C"})", 1); }) ==
        Errc::ConfigError);
  CHECK(thrown_code([&] { dgp_spec_from_json_text(R"({"replications":0})", 1); }) ==
        Errc::ConfigError);
  CHECK(thrown_code([&] { dgp_spec_from_json_text(R"({"band":[0.7,0.3]})", 1); }) ==
        Errc::ConfigError);
  CHECK(thrown_code([&] { dgp_spec_from_json_text(R"({"band":[0.5]})", 1); }) ==
        Errc::ConfigError);
  CHECK(thrown_code([&] { dgp_spec_from_json_text("[]", 1); }) == Errc::ConfigError);
}

TEST_CASE("estimator names and the exit-code policy") {
  const std::vector<std::string> names = {"aps_2sls", "aps_ols", "balance", "naive_ols",
                                          "naive_2sls"};
  for (const std::string& n : names)
    CHECK(regression_mode_name(regression_mode_from_name(n)) == n);
  CHECK(thrown_code([&] { regression_mode_from_name("huh"); }) == Errc::ConfigError);

  for (Errc c : {Errc::ConfigError, Errc::DomainError, Errc::NonpositiveVariance,
                 Errc::DuplicateCentroids, Errc::InsufficientSurrogate})
    CHECK(exit_code_for(c) == 2);
  for (Errc c : {Errc::EmptyDataset, Errc::DimensionMismatch, Errc::MissingColumn,
                 Errc::ParseError, Errc::NonBinary, Errc::NonpositiveBeds})
    CHECK(exit_code_for(c) == 3);
  for (Errc c : {Errc::NoNondegenerateRows, Errc::WeakDesignSingular, Errc::SingularDesign,
                 Errc::NoCompliers, Errc::TooManyFailures})
    CHECK(exit_code_for(c) == 4);
}

TEST_CASE("end-to-end CSV run reproduces a direct library computation exactly") {
  const fs::path out = scratch("e2e");
  RunConfig cfg;
  cfg.input = fixture("rdd_small.csv").string();
  cfg.rule = fixture("rule_threshold.json").string();
  cfg.deltas = {0.25, 0.75};
  cfg.draws = 400;
  cfg.seed = 9;
  cfg.estimators = {"aps_2sls", "aps_ols", "naive_ols"};
  cfg.out_dir = out.string();
  cfg.format = "json";
  std::ostringstream stdout_text;
  run(cfg, stdout_text);

  // Independent pipeline with the documented seed derivation.
  const RuleSpec spec = rule_spec_from_json_text(read_descriptor(cfg.rule));
  const CsvDataset cd = ingest_csv(cfg.input, spec.schema);
  auto [sdata, map] = standardize(cd.data);
  std::vector<ApsResult> aps;
  for (std::size_t k = 0; k < cfg.deltas.size(); ++k) {
    ApsConfig ac;
    ac.delta = cfg.deltas[k];
    ac.draws = cfg.draws;
    ac.seed = derive_seed(derive_seed(cfg.seed, kApsSeedTag), k);
    aps.push_back(simulate_aps(sdata, spec.rule, ac, &map));
  }

  const std::string estimates_text = read_file(out / "estimates.json");
  CHECK(stdout_text.str() == estimates_text);  // --format json echoes the artifact
  const json j = json::parse(estimates_text);
  CHECK(j.at("mode") == "csv");
  CHECK(j.at("n") == 48);
  CHECK(j.at("seed") == 9);
  CHECK(j.at("draws") == 400);
  REQUIRE(j.at("estimates").size() == 5);  // 2 estimators x 2 deltas + 1 naive

  SUBCASE("coefficients match fresh estimator runs bit for bit") {
    for (const json& row : j.at("estimates")) {
      const std::string name = row.at("estimator");
      EstimateReport want;
      if (name == "naive_ols") {
        CHECK(row.at("delta").is_null());
        want = naive_ols(cd.data);
      } else {
        const double delta = row.at("delta").get<double>();
        const std::size_t k = delta == 0.25 ? 0 : 1;
        REQUIRE(cfg.deltas[k] == delta);
        want = name == "aps_2sls" ? tsls_aps(cd.data, aps[k])
                                  : ols_recommendation(cd.data, aps[k]);
      }
      CHECK(row.at("error").is_null());
      // %.17g round-trips doubles exactly, so equality here is bitwise.
      CHECK(row.at("beta1").get<double>() == want.beta1);
      CHECK(row.at("se_robust").get<double>() == want.se_robust);
      CHECK(row.at("n_total").get<std::int64_t>() == want.n_total);
      CHECK(row.at("n_used").get<std::int64_t>() == want.n_used);
      CHECK(row.at("intercept_dropped").get<bool>() == want.intercept_dropped);
      REQUIRE(row.at("coefficients").size() == want.coef_names.size());
      for (std::size_t c = 0; c < want.coef_names.size(); ++c) {
        CHECK(row.at("coefficients")[c].at("name") == want.coef_names[c]);
        CHECK(row.at("coefficients")[c].at("estimate").get<double>() == want.coefficients[c]);
        CHECK(row.at("coefficients")[c].at("se").get<double>() == want.se_all[c]);
      }
      if (name == "aps_2sls") {
        REQUIRE(want.has_first_stage);
        CHECK(row.at("first_stage").at("gamma1").get<double>() == want.first_stage_gamma1);
      }
    }
  }
  SUBCASE("the per-observation score table matches the simulation") {
    std::istringstream lines(read_file(out / "aps.csv"));
    std::string line;
    std::getline(lines, line);
    CHECK(line == "row,aps_0.25,nondegenerate_0.25,aps_0.75,nondegenerate_0.75");
    int i = 0;
    while (std::getline(lines, line)) {
      const std::string want = std::to_string(i + 1) + "," + format_double(aps[0].values[i]) +
                               "," + (aps[0].nondegenerate[i] ? "1" : "0") + "," +
                               format_double(aps[1].values[i]) + "," +
                               (aps[1].nondegenerate[i] ? "1" : "0");
      CHECK(line == want);
      ++i;
    }
    CHECK(i == 48);
  }
  SUBCASE("the sweep table carries one row per estimator-bandwidth pair") {
    std::istringstream lines(read_file(out / "sweep.csv"));
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    REQUIRE(rows.size() == 6);  // header + 2 + 2 + 1
    CHECK(rows[0].rfind("estimator,delta,", 0) == 0);
    CHECK(rows[1].rfind("aps_2sls,0.25,", 0) == 0);
    CHECK(rows[2].rfind("aps_2sls,0.75,", 0) == 0);
    CHECK(rows[5].rfind("naive_ols,,", 0) == 0);
    const std::string table = read_file(out / "sweep.txt");
    CHECK(table.find("estimator: aps_2sls") != std::string::npos);
    CHECK(table.find("delta=0.25") != std::string::npos);
  }
}

TEST_CASE("generator modes: single-sample artifacts and the replication summary") {
  SUBCASE("one synthetic sample behaves like a CSV run") {
    const fs::path out = scratch("dgp_single");
    RunConfig cfg;
    cfg.dgp = R"({"n":400,"p":3})";
    cfg.deltas = {0.5};
    cfg.draws = 200;
    cfg.seed = 3;
    cfg.out_dir = out.string();
    std::ostringstream os;
    run(cfg, os);
    const json j = json::parse(read_file(out / "estimates.json"));
    CHECK(j.at("mode") == "dgp");
    CHECK(j.at("n") == 400);
    CHECK(fs::exists(out / "aps.csv"));
    CHECK(fs::exists(out / "sweep.csv"));
  }
  SUBCASE("replications > 1 switches to the summary artifacts") {
    const fs::path out = scratch("dgp_mc");
    RunConfig cfg;
    cfg.dgp = R"({"n":300,"p":3,"replications":3})";
    cfg.deltas = {0.5};
    cfg.draws = 100;
    cfg.seed = 5;
    cfg.estimators = {"aps_2sls", "naive_ols"};
    cfg.out_dir = out.string();
    cfg.format = "csv";
    std::ostringstream os;
    run(cfg, os);
    CHECK_FALSE(fs::exists(out / "estimates.json"));
    const std::string mc_csv = read_file(out / "mc_summary.csv");
    CHECK(os.str() == mc_csv);
    std::istringstream lines(mc_csv);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 9);  // header + 2 estimators x 4 estimands
    CHECK(read_file(out / "mc_summary.txt").find("Monte Carlo summary: 3 replications") !=
          std::string::npos);
  }
}

TEST_CASE("failure envelopes: machine-readable error JSON and exit codes") {
  const fs::path dir = scratch("errors");
  const auto run_expecting = [&](const RunConfig& cfg, int want_exit,
                                 const std::string& want_code) {
    std::ostringstream os;
    const int rc = run_cli(cfg, os);
    CHECK(rc == want_exit);
    const json j = json::parse(os.str());
    CHECK(j.at("error").at("code") == want_code);
    CHECK(j.at("exit") == want_exit);
    CHECK_FALSE(j.at("error").at("message").get<std::string>().empty());
  };

  SUBCASE("neither input nor generator") {
    run_expecting(RunConfig{}, 2, "ConfigError");
  }
  SUBCASE("both input and generator") {
    RunConfig cfg;
    cfg.input = "a.csv";
    cfg.dgp = "{}";
    run_expecting(cfg, 2, "ConfigError");
  }
  SUBCASE("APS estimators without bandwidths") {
    RunConfig cfg;
    cfg.input = fixture("rdd_small.csv").string();
    cfg.rule = fixture("rule_threshold.json").string();
    run_expecting(cfg, 2, "ConfigError");
  }
  SUBCASE("rule descriptor combined with the generator") {
    RunConfig cfg;
    cfg.dgp = R"({"n":100,"p":2})";
    cfg.rule = R"({"kind":"constant","p":0.5})";
    cfg.deltas = {0.5};
    run_expecting(cfg, 2, "ConfigError");
  }
  SUBCASE("balance estimator without a balance column") {
    RunConfig cfg;
    cfg.input = fixture("rdd_small.csv").string();
    cfg.rule = fixture("rule_threshold.json").string();
    cfg.deltas = {0.25};
    cfg.estimators = {"balance"};
    cfg.out_dir = dir.string();
    run_expecting(cfg, 2, "ConfigError");
  }
  SUBCASE("non-binary instrument column") {
    const fs::path bad = dir / "bad_z.csv";
    std::ofstream(bad) << "y,d,z,x1\n1.0,1,2,0.3\n0.5,0,0,-0.1\n";
    RunConfig cfg;
    cfg.input = bad.string();
    cfg.rule = R"({"columns":{"continuous":["x1"]},"rule":{"kind":"threshold","cutoff":0.0}})";
    cfg.deltas = {0.25};
    cfg.out_dir = dir.string();
    run_expecting(cfg, 3, "NonBinary");
  }
  SUBCASE("missing input file") {
    RunConfig cfg;
    cfg.input = (dir / "absent.csv").string();
    cfg.rule = R"({"rule":{"kind":"threshold","cutoff":0.0}})";
    cfg.deltas = {0.25};
    run_expecting(cfg, 3, "ParseError");
  }
  SUBCASE("every score degenerate: estimation failure") {
    RunConfig cfg;
    cfg.input = fixture("rdd_small.csv").string();
    cfg.rule = R"({"columns":{"continuous":["x1"]},"rule":{"kind":"constant","p":1.0}})";
    cfg.deltas = {0.25};
    cfg.estimators = {"aps_2sls"};
    cfg.out_dir = dir.string();
    run_expecting(cfg, 4, "NoNondegenerateRows");
  }
}

TEST_CASE("artifacts are byte-stable: goldens, reruns, and thread counts") {
  const std::string args_tail = std::string("--input ") + fixture("rdd_small.csv").string() +
                                " --rule " + fixture("rule_threshold.json").string() +
                                " --deltas 0.25,0.75 --draws 400 --seed 9" +
                                " --estimators aps_2sls,naive_ols --format json";
  const std::vector<std::string> artifacts = {"aps.csv", "estimates.json", "sweep.csv",
                                              "sweep.txt"};

  const fs::path a = scratch("golden_a");
  const fs::path b = scratch("golden_b");
  const int rc_a = run_binary(args_tail + " --out " + a.string() + " > " +
                                  (a / "stdout.json").string(),
                              "APS_IV_THREADS=1");
  const int rc_b = run_binary(args_tail + " --out " + b.string() + " > " +
                                  (b / "stdout.json").string(),
                              "APS_IV_THREADS=4");
  REQUIRE(rc_a == 0);
  REQUIRE(rc_b == 0);

  SUBCASE("one worker and four workers produce identical bytes") {
    for (const std::string& name : artifacts) CHECK(read_file(a / name) == read_file(b / name));
  }
  SUBCASE("stdout in json format is the estimates artifact") {
    CHECK(read_file(a / "stdout.json") == read_file(a / "estimates.json"));
  }
  SUBCASE("artifacts match the committed goldens byte for byte") {
    const fs::path golden = fs::path(APSIV_SOURCE_DIR) / "tests" / "golden";
    for (const std::string& name : artifacts) {
      CHECK_MESSAGE(read_file(a / name) == read_file(golden / name), "golden drift: ", name);
    }
  }
  SUBCASE("bad flags exit with the configuration code") {
    CHECK(run_binary("--no-such-flag 2> /dev/null > /dev/null") == 2);
    CHECK(run_binary("--help > /dev/null") == 0);
  }
}
