// Command-line front end for the solver and simulator suite: each subcommand
// runs one experiment kind from a JSON config (or defaults), writes metric
// CSVs plus a manifest, and `oracle-check` runs the brute-force cross-checks.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "resp/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw resp::ConfigError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct CommonOptions {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path,
                  "JSON config file; defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "master seed (overrides the config)")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--out", opts.out_dir,
                  "output directory for metrics.csv and manifest.json");
}

int run_kind(const std::string& kind, const CommonOptions& opts) {
  resp::ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = resp::parse_config(read_file(opts.config_path));
    if (cfg.kind != kind) {
      throw resp::ConfigError("config kind \"" + cfg.kind +
                              "\" does not match subcommand " + kind +
                              " (config: " + opts.config_path + ")");
    }
  } else {
    cfg.kind = kind;
  }
  if (opts.seed_set) cfg.seed = opts.seed;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
  }

  resp::RunRecord rec = resp::run_experiment(cfg);
  std::cout << "kind: " << cfg.kind << "\nconfig hash: " << rec.config_hash
            << "\nrows: " << rec.rows.size() << "\nwall time: "
            << rec.wall_time_s << " s\n";
  for (const std::string& f : rec.output_files) {
    std::cout << "wrote " << f << '\n';
  }
  if (cfg.out_dir.empty()) {
    std::cout << rec.metrics_csv();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Game-theoretic security response: solvers and simulators"};
  app.require_subcommand(1);

  const std::vector<std::string> kinds = resp::experiment_kinds();
  std::map<std::string, CommonOptions> opts;
  for (const std::string& kind : kinds) {
    CLI::App* cmd = app.add_subcommand(kind, "run the " + kind + " experiment");
    add_common(cmd, opts[kind]);
  }

  CommonOptions oracle_opts;
  std::string suite;
  CLI::App* oracle = app.add_subcommand(
      "oracle-check", "run brute-force oracle cross-checks");
  oracle->add_option("--suite", suite,
                     "suite name or \"all\"; omit to list suites");
  oracle->add_option("--seed", oracle_opts.seed, "master seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (oracle->parsed()) {
      resp::OracleReport rep = resp::oracle_check(suite, oracle_opts.seed);
      std::cout << resp::oracle_report_text(rep);
      return rep.all_pass ? 0 : 1;
    }
    for (const std::string& kind : kinds) {
      if (app.get_subcommand(kind)->parsed()) {
        return run_kind(kind, opts[kind]);
      }
    }
  } catch (const resp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
