#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "resp/rng.hpp"

namespace resp {

// Experiment runner binding all modules: schema-validated JSON configs,
// seeded execution, deterministic CSV emission, and a cross-check suite of
// brute-force oracles.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A parameter block is a flat string -> number map; schemas are per
// experiment kind and unknown fields are rejected by name.
struct ParamBlock {
  std::vector<std::pair<std::string, double>> entries;

  bool has(const std::string& key) const;
  double get(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
};

struct ExperimentConfig {
  std::string kind;     // experiment kind = CLI subcommand name
  ParamBlock model;     // model parameters
  ParamBlock algorithm; // algorithm hyperparameters
  uint64_t seed = 0;
  std::string out_dir;  // empty = no files written

  void validate() const;  // schema check incl. unknown-field rejection
};

// Known experiment kinds, in dispatch order.
std::vector<std::string> experiment_kinds();

// Parse and schema-validate a JSON config document. Errors name the
// offending field path.
ExperimentConfig parse_config(const std::string& json_text);
std::string config_to_json(const ExperimentConfig& cfg);

struct RunRecord {
  std::string config_hash;       // hash of the canonical config serialization
  std::string artifact_version;
  double wall_time_s = 0.0;
  std::vector<std::string> header;           // metric column names
  std::vector<std::vector<double>> rows;     // per-iteration metric rows
  std::vector<std::string> output_files;     // paths written (if out_dir set)

  std::string metrics_csv() const;  // deterministic; what gets written
};

// Dispatches to the named module entry point; writes metrics.csv and a run
// manifest into cfg.out_dir when set. Identical config + seed reproduces
// identical metric rows bit-for-bit.
RunRecord run_experiment(const ExperimentConfig& cfg);

// --- Oracle cross-checks -----------------------------------------------------

struct OracleEntry {
  std::string suite;
  std::string name;
  bool pass = false;
  std::string detail;  // inputs and both values on mismatch
};

struct OracleReport {
  std::vector<OracleEntry> entries;
  bool all_pass = true;
};

std::vector<std::string> oracle_suites();

// Runs the named suite's brute-force oracles against the main
// implementations; empty name lists the available suites.
OracleReport oracle_check(const std::string& suite, uint64_t seed = 1);
std::string oracle_report_text(const OracleReport& report);

}  // namespace resp
