// Batch orchestration: configuration descriptors, the end-to-end pipeline
// (ingest -> APS -> estimators -> artifacts), and the process exit-code policy.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "apsiv/csv.hpp"
#include "apsiv/dgp.hpp"
#include "apsiv/mc.hpp"
#include "apsiv/rules.hpp"

namespace apsiv {

struct RunConfig {
  std::string input;  // CSV dataset path; exactly one of {input, dgp} must be set
  std::string dgp;    // synthetic-DGP descriptor: inline JSON or a file path
  std::string rule;   // rule descriptor (inline JSON or file path); required with input
  std::vector<double> deltas;
  std::int64_t draws = 0;  // 0 -> max(1000, ceil(n^0.6))
  std::uint64_t seed = 1;
  std::vector<std::string> estimators = {"aps_2sls"};
  std::string out_dir = ".";
  std::string format = "table";  // stdout summary: json | csv | table
};

// Parsed --rule descriptor: column roles plus the decision rule itself.
struct RuleSpec {
  CsvSchema schema;
  DecisionRule rule;
};

// Parsed --dgp descriptor; replications > 1 switches the run into Monte Carlo
// mode (mc_summary artifacts instead of per-observation ones).
struct DgpSpec {
  DgpConfig config;
  std::int64_t replications = 1;
};

// Descriptor text resolution: a string starting with '{' is inline JSON,
// anything else is a path to a JSON file.
std::string read_descriptor(const std::string& text_or_path);

// {"columns": {...}, "rule": {...}} -> schema + rule.
RuleSpec rule_spec_from_json_text(const std::string& text);
// Just the rule object {"kind": ..., ...}.
DecisionRule rule_from_json_text(const std::string& text);
DgpSpec dgp_spec_from_json_text(const std::string& text, std::uint64_t seed);

// Estimator selection names: aps_2sls, aps_ols, balance, naive_ols, naive_2sls.
RegressionMode regression_mode_from_name(const std::string& name);

// Executes the run and writes artifacts under config.out_dir:
//   single-sample mode: aps.csv, estimates.json, sweep.csv, sweep.txt
//   Monte Carlo mode:   mc_summary.csv, mc_summary.txt
// and prints the artifact selected by config.format to `out`. Parallelism
// comes from APS_IV_THREADS (0/unset = auto); artifacts never depend on it.
// Throws Error on failure.
void run(const RunConfig& config, std::ostream& out);

// Exit-code policy: 0 ok, 2 config error, 3 data error, 4 estimation error.
int exit_code_for(Errc code);

// run() wrapped in the exit-code policy; failures print a machine-readable
// error JSON {"error": {"code", "message"}, "exit": N} to `out`.
int run_cli(const RunConfig& config, std::ostream& out);

}  // namespace apsiv
