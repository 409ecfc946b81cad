#include "resp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "resp/causal.hpp"
#include "resp/conjectural.hpp"
#include "resp/csv.hpp"
#include "resp/decomp.hpp"
#include "resp/lp.hpp"
#include "resp/mdp.hpp"
#include "resp/stopgame.hpp"
#include "resp/stopping.hpp"
#include "resp/tolerance.hpp"

namespace resp {

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

using nlohmann::json;

const std::map<std::string,
               std::pair<std::set<std::string>, std::set<std::string>>>&
schemas() {
  static const std::map<std::string,
                        std::pair<std::set<std::string>, std::set<std::string>>>
      s = {
          {"solve-stopping",
           {{"stops_total", "intrusion_probability", "reward_stop",
             "reward_service", "reward_intrusion", "benchmark"},
            {"iterations", "episodes_per_eval", "eval_episodes"}}},
          {"solve-stopgame",
           {{"stops_total"},
            {"max_iterations", "target_delta", "eval_episodes",
             "spsa_iterations", "episodes_per_eval", "restarts"}}},
          {"run-dfp",
           {{"nodes"},
            {"max_iterations", "eval_episodes", "horizon", "parallel",
             "spsa_iterations", "episodes_per_eval", "grid_points"}}},
          {"tolerance-recovery",
           {{"p_attack", "p_crash", "eta", "btr", "obs_trials", "attacker"},
            {"optimizer", "episodes_per_eval", "horizon", "iterations",
             "population", "episodes", "max_steps"}}},
          {"tolerance-lp",
           {{"max_nodes", "tolerance_f", "availability_floor", "p_fail",
             "smoothing"},
            {}}},
          {"reliability",
           {{"max_nodes", "tolerance_f", "p_fail", "s1", "horizon"}, {}}},
          {"run-col",
           {{"server_count", "healthy_alert", "theta_true"},
            {"horizon", "lookahead_def", "lookahead_att", "mc_samples",
             "truncation_depth"}}},
          {"check-berk-nash", {{"p", "q", "gamma"}, {}}},
          {"plan-cpomcp",
           {{"nodes"},
            {"iterations", "particles", "horizon", "pruning", "ucb_c",
             "rollout_depth", "max_depth"}}},
      };
  return s;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

json block_to_json(const ParamBlock& block) {
  json j = json::object();
  for (const auto& [k, v] : block.entries) j[k] = v;
  return j;
}

ParamBlock block_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  ParamBlock block;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) {
      throw ConfigError(path + "." + k + " must be a number");
    }
    block.entries.emplace_back(k, v.get<double>());
  }
  std::sort(block.entries.begin(), block.entries.end());
  return block;
}

}  // namespace

bool ParamBlock::has(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return true;
  }
  return false;
}

double ParamBlock::get(const std::string& key, double fallback) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  return fallback;
}

int ParamBlock::get_int(const std::string& key, int fallback) const {
  return static_cast<int>(std::llround(get(key, fallback)));
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> kinds;
  for (const auto& [k, v] : schemas()) kinds.push_back(k);
  return kinds;
}

void ExperimentConfig::validate() const {
  auto it = schemas().find(kind);
  if (it == schemas().end()) {
    throw ConfigError("unknown experiment kind: \"" + kind + "\"");
  }
  for (const auto& [k, v] : model.entries) {
    if (!it->second.first.count(k)) {
      throw ConfigError("unknown field model." + k + " for kind " + kind);
    }
  }
  for (const auto& [k, v] : algorithm.entries) {
    if (!it->second.second.count(k)) {
      throw ConfigError("unknown field algorithm." + k + " for kind " + kind);
    }
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  ExperimentConfig cfg;
  for (const auto& [k, v] : j.items()) {
    if (k == "kind") {
      if (!v.is_string()) throw ConfigError("kind must be a string");
      cfg.kind = v.get<std::string>();
    } else if (k == "model") {
      cfg.model = block_from_json(v, "model");
    } else if (k == "algorithm") {
      cfg.algorithm = block_from_json(v, "algorithm");
    } else if (k == "seed") {
      if (!v.is_number_unsigned()) {
        throw ConfigError("seed must be a nonnegative integer");
      }
      cfg.seed = v.get<uint64_t>();
    } else if (k == "out") {
      if (!v.is_string()) throw ConfigError("out must be a string");
      cfg.out_dir = v.get<std::string>();
    } else {
      throw ConfigError("unknown field " + k + " at the top level");
    }
  }
  if (cfg.kind.empty()) throw ConfigError("missing required field kind");
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = cfg.kind;
  j["model"] = block_to_json(cfg.model);
  j["algorithm"] = block_to_json(cfg.algorithm);
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  return j.dump(2);
}

std::string RunRecord::metrics_csv() const {
  std::ostringstream out;
  for (size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_format(row[i]);
    }
    out << '\n';
  }
  return out.str();
}

// --- Experiment dispatch ------------------------------------------------------

namespace {

void run_solve_stopping(const ExperimentConfig& cfg, RunRecord& rec) {
  int stops = cfg.model.get_int("stops_total", 1);
  MultiStopModel model = cfg.model.get("benchmark", 0.0) != 0.0
                             ? MultiStopModel::benchmark(stops)
                             : MultiStopModel::example();
  model.stops_total = stops;
  model.intrusion_probability =
      cfg.model.get("intrusion_probability", model.intrusion_probability);
  model.reward_stop = cfg.model.get("reward_stop", model.reward_stop);
  model.reward_service = cfg.model.get("reward_service", model.reward_service);
  model.reward_intrusion =
      cfg.model.get("reward_intrusion", model.reward_intrusion);
  model.validate();

  SpsaConfig spsa;
  spsa.iterations = cfg.algorithm.get_int("iterations", 200);
  spsa.common_random_numbers = true;
  spsa.epsilon = 0.602;
  spsa.lambda = 0.101;
  spsa.clip_lo = -6.0;
  spsa.clip_hi = 6.0;
  int episodes = cfg.algorithm.get_int("episodes_per_eval", 30);
  TSpsaResult result = t_spsa(model, spsa, episodes, cfg.seed);

  rec.header = {"iteration", "mean_return"};
  for (int l = 1; l <= stops; ++l) {
    rec.header.push_back("threshold_" + std::to_string(l));
  }
  for (size_t i = 0; i < result.curve.size(); ++i) {
    std::vector<double> row = {static_cast<double>(i + 1),
                               result.curve[i].first};
    for (double a : result.curve[i].second) row.push_back(a);
    rec.rows.push_back(std::move(row));
  }
}

void run_solve_stopgame(const ExperimentConfig& cfg, RunRecord& rec) {
  StoppingGame game = StoppingGame::benchmark(cfg.model.get_int(
      "stops_total", 1));
  TfpConfig tfp;
  tfp.max_iterations = cfg.algorithm.get_int("max_iterations", 5);
  tfp.target_delta = cfg.algorithm.get("target_delta", 0.2);
  tfp.eval_episodes = cfg.algorithm.get_int("eval_episodes", 200);
  tfp.budget.spsa.iterations = cfg.algorithm.get_int("spsa_iterations", 60);
  tfp.budget.episodes_per_eval =
      cfg.algorithm.get_int("episodes_per_eval", 30);
  tfp.budget.restarts = cfg.algorithm.get_int("restarts", 2);
  TfpResult result = t_fp(game, tfp, cfg.seed);

  rec.header = {"iteration", "exploitability", "std_error",
                "value_defender_br", "value_attacker_br"};
  for (const TfpTraceRow& row : result.trace) {
    rec.rows.push_back({static_cast<double>(row.iteration), row.delta,
                        row.std_error, row.value_defender_br,
                        row.value_attacker_br});
  }
}

void run_dfp_experiment(const ExperimentConfig& cfg, RunRecord& rec) {
  int nodes = cfg.model.get_int("nodes", 1);
  InfraGraph graph =
      nodes <= 1 ? InfraGraph::single_node() : InfraGraph::example_six();
  LocalDynamics dyn = LocalDynamics::defaults(graph.zone_count);
  DfpConfig dcfg;
  dcfg.max_iterations = cfg.algorithm.get_int("max_iterations", 3);
  dcfg.eval_episodes = cfg.algorithm.get_int("eval_episodes", 60);
  dcfg.horizon = cfg.algorithm.get_int("horizon", 60);
  dcfg.parallel = cfg.algorithm.get("parallel", 0.0) != 0.0;
  dcfg.budget.spsa.iterations = cfg.algorithm.get_int("spsa_iterations", 40);
  dcfg.budget.episodes_per_eval =
      cfg.algorithm.get_int("episodes_per_eval", 20);
  dcfg.budget.grid_points = cfg.algorithm.get_int("grid_points", 11);
  DfpResult result = dfp(graph, dyn, dcfg, cfg.seed);

  rec.header = {"iteration", "exploitability", "std_error"};
  for (int i = 1; i <= graph.node_count; ++i) {
    rec.header.push_back("node_" + std::to_string(i) + "_br_value");
  }
  for (const DfpTraceRow& row : result.trace) {
    std::vector<double> r = {static_cast<double>(row.iteration),
                             row.exploitability, row.std_error};
    for (double v : row.node_defender_br_values) r.push_back(v);
    rec.rows.push_back(std::move(r));
  }
}

void run_tolerance_recovery(const ExperimentConfig& cfg, RunRecord& rec) {
  RecoveryGameParams params =
      RecoveryGameParams::defaults(cfg.model.get_int("obs_trials", 100));
  params.p_attack = cfg.model.get("p_attack", params.p_attack);
  params.p_crash = cfg.model.get("p_crash", params.p_crash);
  params.eta = cfg.model.get("eta", params.eta);
  params.btr = cfg.model.get_int("btr", params.btr);
  params.validate();
  RecoveryAttacker att = cfg.model.get("attacker", 1.0) != 0.0
                             ? recovery_always_attack()
                             : recovery_never_attack();

  RecoveryBrConfig br;
  br.optimizer = cfg.algorithm.get("optimizer", 1.0) != 0.0
                     ? RecoveryOptimizer::Cem
                     : RecoveryOptimizer::Spsa;
  br.episodes_per_eval = cfg.algorithm.get_int("episodes_per_eval", 50);
  br.horizon = cfg.algorithm.get_int("horizon", 800);
  br.cem.iterations = cfg.algorithm.get_int("iterations", br.cem.iterations);
  br.spsa.iterations = cfg.algorithm.get_int("iterations", br.spsa.iterations);
  br.cem.population = cfg.algorithm.get_int("population", br.cem.population);

  RecoveryThresholds thr = recovery_best_response(params, att, br, cfg.seed);
  CostEstimate cost = recovery_average_cost(
      params, thr, att, cfg.algorithm.get_int("episodes", 500),
      cfg.algorithm.get_int("max_steps", 2000), cfg.seed + 1);

  rec.header = {"avg_cost", "std_error"};
  for (size_t i = 0; i < thr.theta.size(); ++i) {
    rec.header.push_back("threshold_" + std::to_string(i + 1));
  }
  std::vector<double> row = {cost.mean, cost.std_error};
  for (double t : thr.theta) row.push_back(t);
  rec.rows.push_back(std::move(row));
}

void run_tolerance_lp(const ExperimentConfig& cfg, RunRecord& rec) {
  ReplicationCmdp cmdp;
  cmdp.max_nodes = cfg.model.get_int("max_nodes", 4);
  cmdp.tolerance_f = cfg.model.get_int("tolerance_f", 1);
  cmdp.availability_floor = cfg.model.get("availability_floor", 0.9);
  cmdp.transition = binomial_replication_transition(
      cmdp.max_nodes, cfg.model.get("p_fail", 0.1),
      cfg.model.get("smoothing", 0.01));
  cmdp.validate();
  CmdpSolution sol = cmdp_best_response_lp(cmdp);

  rec.header = {"state", "p_add", "rho_keep", "rho_add", "avg_cost"};
  for (int s = 0; s <= cmdp.max_nodes; ++s) {
    rec.rows.push_back({static_cast<double>(s), sol.policy[s],
                        sol.occupancy.at(s, 0), sol.occupancy.at(s, 1),
                        sol.avg_cost});
  }
}

void run_reliability(const ExperimentConfig& cfg, RunRecord& rec) {
  int max_nodes = cfg.model.get_int("max_nodes", 4);
  int f = cfg.model.get_int("tolerance_f", 1);
  int s1 = cfg.model.get_int("s1", max_nodes);
  int horizon = cfg.model.get_int("horizon", 50);
  double p_fail = cfg.model.get("p_fail", 0.1);
  auto full = binomial_replication_transition(max_nodes, p_fail, 0.0);
  // Passive chain: the controller never adds nodes.
  std::vector<std::vector<double>> chain(full.size());
  for (size_t s = 0; s < full.size(); ++s) chain[s] = full[s][0];
  double m = mttf(chain, f, s1);

  rec.header = {"t", "reliability", "mttf"};
  for (int t = 0; t <= horizon; ++t) {
    rec.rows.push_back({static_cast<double>(t), reliability(chain, f, s1, t),
                        m});
  }
}

void run_col_experiment(const ExperimentConfig& cfg, RunRecord& rec) {
  ColConfig col = ColConfig::example();
  col.game =
      AptGame::example(cfg.model.get_int("server_count", 1),
                       cfg.model.get("healthy_alert", 0.2));
  double theta_true = cfg.model.get("theta_true", 0.8);
  col.true_theta = [theta_true](int t) { (void)t; return theta_true; };
  col.horizon = cfg.algorithm.get_int("horizon", col.horizon);
  col.lookahead_def = cfg.algorithm.get_int("lookahead_def", col.lookahead_def);
  col.lookahead_att = cfg.algorithm.get_int("lookahead_att", col.lookahead_att);
  col.rollout.mc_samples =
      cfg.algorithm.get_int("mc_samples", col.rollout.mc_samples);
  col.rollout.truncation_depth =
      cfg.algorithm.get_int("truncation_depth", col.rollout.truncation_depth);
  col.validate();
  ColTrace trace = col_run(col, cfg.seed);

  rec.header = {"t",      "state",           "obs",
                "a_def",  "a_att",           "cost",
                "theta",  "lookahead"};
  for (const ColStep& s : trace.steps) {
    rec.rows.push_back({static_cast<double>(s.t),
                        static_cast<double>(s.state),
                        static_cast<double>(s.obs),
                        static_cast<double>(s.a_def),
                        static_cast<double>(s.a_att), s.cost,
                        s.conjecture_theta,
                        static_cast<double>(s.conjecture_lookahead)});
  }
}

void run_check_berk_nash(const ExperimentConfig& cfg, RunRecord& rec) {
  BerkNashExampleReport rep =
      check_berk_nash(cfg.model.get("p", 0.0), cfg.model.get("q", 1.0),
                      cfg.model.get("gamma", 0.9));
  rec.header = {"surviving", "nu0", "nu1", "rho_a", "discrepancy_a",
                "discrepancy_b", "rational", "consistent", "stationary",
                "has_equilibrium", "conflict"};
  rec.rows.push_back({static_cast<double>(rep.surviving_conjecture),
                      rep.nu[0], rep.nu[1], rep.rho_a,
                      rep.discrepancy_by_conjecture[0],
                      rep.discrepancy_by_conjecture[1],
                      rep.rational ? 1.0 : 0.0, rep.consistent ? 1.0 : 0.0,
                      rep.stationary ? 1.0 : 0.0,
                      rep.has_equilibrium ? 1.0 : 0.0,
                      rep.conflict ? 1.0 : 0.0});
}

void run_plan_cpomcp(const ExperimentConfig& cfg, RunRecord& rec) {
  ScmEnvironment env = ScmEnvironment::example(cfg.model.get_int("nodes", 2));
  EpisodeConfig ep;
  ep.planner.iterations = cfg.algorithm.get_int("iterations", 100);
  ep.planner.pruning = cfg.algorithm.get("pruning", 1.0) != 0.0;
  ep.planner.ucb_c = cfg.algorithm.get("ucb_c", ep.planner.ucb_c);
  ep.planner.rollout_depth =
      cfg.algorithm.get_int("rollout_depth", ep.planner.rollout_depth);
  ep.planner.max_depth =
      cfg.algorithm.get_int("max_depth", ep.planner.max_depth);
  ep.particles = cfg.algorithm.get_int("particles", 300);
  ep.horizon = cfg.algorithm.get_int("horizon", 10);
  EpisodeTrace trace = run_episode(env, ep, cfg.seed);

  rec.header = {"t",     "iv_type",    "iv_node",  "iv_decoy",
                "reward", "depletions", "tree_size", "value"};
  for (const EpisodeStep& s : trace.steps) {
    rec.rows.push_back({static_cast<double>(s.t),
                        static_cast<double>(s.action.type),
                        static_cast<double>(s.action.node),
                        static_cast<double>(s.action.decoy), s.reward,
                        static_cast<double>(s.depletions),
                        static_cast<double>(s.tree_size), trace.value});
  }
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunRecord rec;
  std::string canonical = config_to_json(cfg);
  rec.config_hash = hex64(fnv1a64(canonical));
  rec.artifact_version = kArtifactVersion;

  auto t0 = std::chrono::steady_clock::now();
  if (cfg.kind == "solve-stopping") {
    run_solve_stopping(cfg, rec);
  } else if (cfg.kind == "solve-stopgame") {
    run_solve_stopgame(cfg, rec);
  } else if (cfg.kind == "run-dfp") {
    run_dfp_experiment(cfg, rec);
  } else if (cfg.kind == "tolerance-recovery") {
    run_tolerance_recovery(cfg, rec);
  } else if (cfg.kind == "tolerance-lp") {
    run_tolerance_lp(cfg, rec);
  } else if (cfg.kind == "reliability") {
    run_reliability(cfg, rec);
  } else if (cfg.kind == "run-col") {
    run_col_experiment(cfg, rec);
  } else if (cfg.kind == "check-berk-nash") {
    run_check_berk_nash(cfg, rec);
  } else if (cfg.kind == "plan-cpomcp") {
    run_plan_cpomcp(cfg, rec);
  } else {
    throw ConfigError("unknown experiment kind: \"" + cfg.kind + "\"");
  }
  auto t1 = std::chrono::steady_clock::now();
  rec.wall_time_s = std::chrono::duration<double>(t1 - t0).count();

  if (!cfg.out_dir.empty()) {
    std::string metrics_path = cfg.out_dir + "/metrics.csv";
    {
      std::ofstream out(metrics_path, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + metrics_path);
      out << rec.metrics_csv();
    }
    rec.output_files.push_back(metrics_path);

    json manifest;
    manifest["artifact_version"] = rec.artifact_version;
    manifest["config"] = json::parse(canonical);
    manifest["config_hash"] = rec.config_hash;
    manifest["outputs"] = json::array({"metrics.csv"});
    manifest["wall_time_s"] = rec.wall_time_s;
    std::string manifest_path = cfg.out_dir + "/manifest.json";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + manifest_path);
    out << manifest.dump(2) << '\n';
    rec.output_files.push_back(manifest_path);
  }
  return rec;
}

// --- Oracle cross-checks --------------------------------------------------------

namespace {

void add(OracleReport& report, const std::string& suite,
         const std::string& name, bool pass, const std::string& detail) {
  report.entries.push_back({suite, name, pass, detail});
  if (!pass) report.all_pass = false;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

FiniteMdp random_mdp(int states, int actions, double discount,
                     RngStream& rng) {
  FiniteMdp mdp = FiniteMdp::zeros(states, actions, discount);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      double total = 0.0;
      std::vector<double> row(states);
      for (int s2 = 0; s2 < states; ++s2) {
        row[s2] = rng.uniform() + 1e-3;
        total += row[s2];
      }
      for (int s2 = 0; s2 < states; ++s2) mdp.p(s, a, s2) = row[s2] / total;
      mdp.r(s, a) = rng.uniform() * 2.0 - 1.0;
    }
  }
  mdp.initial_distribution.assign(states, 1.0 / states);
  return mdp;
}

FinitePomdp random_pomdp222(RngStream& rng) {
  FinitePomdp pomdp;
  pomdp.base = random_mdp(2, 2, 1.0, rng);
  pomdp.base.horizon = 3;
  pomdp.observation_count = 2;
  pomdp.observation.resize(4);
  for (int s = 0; s < 2; ++s) {
    double z = 0.1 + 0.8 * rng.uniform();
    pomdp.z(0, s) = z;
    pomdp.z(1, s) = 1.0 - z;
  }
  return pomdp;
}

// Exhaustive belief-tree expectimax, the exact finite-horizon oracle.
double belief_expectimax(const FinitePomdp& pomdp, std::vector<double> b,
                         int horizon) {
  if (horizon == 0) return 0.0;
  int n = pomdp.base.state_count;
  double best = -1e300;
  for (int a = 0; a < pomdp.base.action_count; ++a) {
    double value = 0.0;
    for (int s = 0; s < n; ++s) value += b[s] * pomdp.base.r(s, a);
    for (int o = 0; o < pomdp.observation_count; ++o) {
      std::vector<double> next(n, 0.0);
      double mass = 0.0;
      for (int s2 = 0; s2 < n; ++s2) {
        double q = 0.0;
        for (int s = 0; s < n; ++s) q += b[s] * pomdp.base.p(s, a, s2);
        next[s2] = q * pomdp.z(o, s2);
        mass += next[s2];
      }
      if (mass <= 0.0) continue;
      for (double& v : next) v /= mass;
      value += mass * belief_expectimax(pomdp, next, horizon - 1);
    }
    best = std::max(best, value);
  }
  return best;
}

void oracle_dp(OracleReport& rep, uint64_t seed) {
  RngStream rng(seed);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    FiniteMdp mdp = random_mdp(4, 3, 0.9, rng);
    SolveResult vi = value_iterate(mdp, 1e-9);
    SolveResult pi = policy_iterate(mdp);
    std::vector<double> lp = solve_mdp_lp(mdp, mdp.initial_distribution);
    for (int s = 0; s < 4; ++s) {
      worst = std::max(worst, std::abs(vi.values[s] - pi.values[s]));
      worst = std::max(worst, std::abs(vi.values[s] - lp[s]));
    }
  }
  add(rep, "dp-core", "three solvers agree on random models", worst <= 1e-5,
      "max deviation " + num(worst));

  double worst_pomdp = 0.0;
  for (int k = 0; k < 5; ++k) {
    FinitePomdp pomdp = random_pomdp222(rng);
    AlphaVectorSet vf = exact_pomdp_solve(pomdp, 3);
    for (int g = 0; g <= 4; ++g) {
      std::vector<double> b = {g / 4.0, 1.0 - g / 4.0};
      double exact = vf.value(b);
      double brute = belief_expectimax(pomdp, b, 3);
      worst_pomdp = std::max(worst_pomdp, std::abs(exact - brute));
    }
  }
  add(rep, "dp-core", "exact solver matches belief-tree expectimax",
      worst_pomdp <= 1e-9, "max deviation " + num(worst_pomdp));
}

void oracle_stopping(OracleReport& rep, uint64_t) {
  MultiStopModel model = MultiStopModel::example();
  StoppingOracle oracle = solve_stopping_oracle(model);
  // The stop region must be an upper belief interval.
  bool upper = true;
  bool stopped = false;
  for (int g = 0; g <= 200; ++g) {
    double b = g / 200.0;
    bool stop = oracle.q_stop(1, b) >= oracle.q_continue(1, b) - 1e-12;
    if (stopped && !stop) upper = false;
    stopped = stop || stopped;
  }
  add(rep, "stopping", "stop region is an upper interval", upper && stopped,
      upper ? "verified on a 201-point belief grid"
            : "continue re-entered above the first stop belief");

  MultiStopModel bench = MultiStopModel::benchmark(3);
  bool tp2 = is_tp2_pair(bench.obs_no_intrusion, bench.obs_intrusion);
  OracleThresholds thr = extract_oracle_thresholds(bench);
  bool nested = thr.alpha.size() == 3 && thr.alpha[0] >= thr.alpha[1] - 1e-9 &&
                thr.alpha[1] >= thr.alpha[2] - 1e-9;
  add(rep, "stopping", "thresholds nest across stop levels", tp2 && nested,
      "alpha = (" + num(thr.alpha[0]) + ", " + num(thr.alpha[1]) + ", " +
          num(thr.alpha[2]) + ")");
}

void oracle_stopgame(OracleReport& rep, uint64_t seed) {
  StoppingGame game = StoppingGame::benchmark(1);
  GridEquilibrium eq = grid_equilibrium_single_stop(game, 5, 120, seed);
  double def_mass = 0.0, att_mass = 0.0;
  for (double w : eq.defender_mix) def_mass += w;
  for (double w : eq.attacker_mix) att_mass += w;
  bool mixes_ok = std::abs(def_mass - 1.0) <= 1e-9 &&
                  std::abs(att_mass - 1.0) <= 1e-9;
  add(rep, "stopgame", "grid equilibrium mixtures are distributions",
      mixes_ok,
      "defender mass " + num(def_mass) + ", attacker mass " + num(att_mass));
  // The sampled-matrix game value lies between the matrix extremes and the
  // equilibrium is unexploitable within the matrix itself.
  double lo = 1e300, hi = -1e300;
  for (const auto& row : eq.payoff) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  bool in_range = eq.value >= lo - 1e-9 && eq.value <= hi + 1e-9;
  double best_dev = -1e300;
  for (size_t i = 0; i < eq.payoff.size(); ++i) {
    double v = 0.0;
    for (size_t j = 0; j < eq.payoff[i].size(); ++j) {
      v += eq.payoff[i][j] * eq.attacker_mix[j];
    }
    best_dev = std::max(best_dev, v);
  }
  bool unexploitable = best_dev <= eq.value + 1e-6;
  add(rep, "stopgame", "matrix-game equilibrium is internally consistent",
      in_range && unexploitable,
      "value " + num(eq.value) + ", best defender deviation " +
          num(best_dev));
}

void oracle_decomp(OracleReport& rep, uint64_t) {
  // Hand-computed marginal progression probabilities of the static
  // attacker: recon w.p. 0.2 when hidden; brute/exploit w.p. 0.15 each.
  LocalDynamics dyn = LocalDynamics::defaults(5);
  LocalAttackerTable att = static_attacker_table();
  double p = recon_probability(dyn, att);
  double q = compromise_probability(dyn, att);
  double p_hand = 0.2 * dyn.p_recon;
  double q_hand = 0.15 * dyn.p_bruteforce + 0.15 * dyn.p_exploit;
  bool ok = std::abs(p - p_hand) <= 1e-12 && std::abs(q - q_hand) <= 1e-12;
  add(rep, "decomp", "progression marginals match hand computation", ok,
      "p = " + num(p) + " vs " + num(p_hand) + ", q = " + num(q) + " vs " +
          num(q_hand));

  // Additive utility: the graph utility is the sum of per-node terms.
  InfraGraph graph = InfraGraph::example_six();
  std::vector<NodeSubgame> subs = decompose(graph, dyn);
  double total = 0.0;
  for (const NodeSubgame& sub : subs) {
    total += node_utility(sub.ancestor_count, 1, 0, 0, dyn.action_costs,
                          dyn.eta, dyn.k);
  }
  double expected = 0.0;
  for (int i = 1; i <= graph.node_count; ++i) {
    expected += dyn.eta * dyn.k * graph.ancestor_count(i);
  }
  add(rep, "decomp", "utility decomposes additively over nodes",
      std::abs(total - expected) <= 1e-12,
      "sum " + num(total) + " vs " + num(expected));
}

void oracle_tolerance(OracleReport& rep, uint64_t) {
  // Single-node closed forms.
  double pf = 0.2;
  std::vector<std::vector<double>> chain = {{1.0, 0.0}, {pf, 1.0 - pf}};
  double m = mttf(chain, 0, 1);
  bool mttf_ok = std::abs(m - 1.0 / pf) <= 1e-10 && mttf(chain, 1, 1) == 0.0;
  bool rel_ok = true;
  for (int t = 0; t <= 20; ++t) {
    if (std::abs(reliability(chain, 0, 1, t) - std::pow(1.0 - pf, t)) >
        1e-10) {
      rel_ok = false;
    }
  }
  add(rep, "tolerance", "single-node reliability closed forms",
      mttf_ok && rel_ok, "mttf " + num(m) + " vs " + num(1.0 / pf));

  ReplicationCmdp cmdp;
  cmdp.max_nodes = 4;
  cmdp.tolerance_f = 1;
  cmdp.availability_floor = 0.8;
  cmdp.transition = binomial_replication_transition(4, 0.1, 0.01);
  CmdpSolution sol = cmdp_best_response_lp(cmdp);
  double mass = 0.0, avail = 0.0;
  for (int s = 0; s <= 4; ++s) {
    mass += sol.occupancy.state_marginal(s);
    if (s > cmdp.tolerance_f) avail += sol.occupancy.state_marginal(s);
  }
  ThresholdMixture mix =
      verify_threshold_mixture(sol.policy, cmdp.tolerance_f);
  bool ok = std::abs(mass - 1.0) <= 1e-8 &&
            avail >= cmdp.availability_floor - 1e-8 && mix.ok;
  add(rep, "tolerance", "occupancy solution satisfies its invariants", ok,
      "mass " + num(mass) + ", availability " + num(avail) +
          (mix.ok ? ", threshold mixture recovered"
                  : ", threshold mixture failed"));
}

void oracle_conjectural(OracleReport& rep, uint64_t) {
  // Closed-form cost-to-go vs direct 2x2 linear solve.
  double gamma = 0.9, x = 0.3;
  std::array<double, 2> j = berk_nash_closed_form_costs(gamma, x);
  // Solve (I - gamma P) J = c by hand for P = [[1-x, x], [1, 0]],
  // c = (0, -1).
  double a11 = 1.0 - gamma * (1.0 - x), a12 = -gamma * x;
  double a21 = -gamma, a22 = 1.0;
  double det = a11 * a22 - a12 * a21;
  double j0 = (0.0 * a22 - a12 * (-1.0)) / det;
  double j1 = (a11 * (-1.0) - a21 * 0.0) / det;
  bool closed_ok = std::abs(j[0] - j0) <= 1e-12 && std::abs(j[1] - j1) <= 1e-12;
  add(rep, "conjectural", "closed-form costs match a direct solve", closed_ok,
      "J = (" + num(j[0]) + ", " + num(j[1]) + ") vs (" + num(j0) + ", " +
          num(j1) + ")");

  BerkNashExampleReport a = check_berk_nash(0.0, 1.0, 0.9);
  BerkNashExampleReport b = check_berk_nash(1.0, 0.0, 0.9);
  bool ok = a.has_equilibrium && a.surviving_conjecture == 0 && !a.conflict &&
            b.conflict && !b.has_equilibrium;
  // Stationary occupancy of belief 0 under the pure identity conjecture
  // with q = 1: nu = (1/2, 1/2).
  double nu0 = berk_nash_stationary_nu0(0.0, 1.0, 1.0);
  ok = ok && std::abs(nu0 - 0.5) <= 1e-10;
  add(rep, "conjectural", "misspecification checker reproduces the example",
      ok,
      "equilibrium at (0,1): " + std::string(a.has_equilibrium ? "yes" : "no") +
          ", conflict at (1,0): " + std::string(b.conflict ? "yes" : "no") +
          ", nu0 = " + num(nu0));
}

void oracle_causal(OracleReport& rep, uint64_t seed) {
  // Depth-2 exhaustive search on a deterministic single-node toy.
  ScmEnvironment env;
  env.zone = {3};
  env.decoy_count = 0;
  env.exploit_vuln = {0};
  env.exploit_success = 1.0;
  env.arrival_dist = {1.0};
  env.departure_dist = {1.0};
  env.max_clients = 0;
  env.noise_base = 0.0;
  env.noise_per_client = 0.0;
  env.psi = {0.0, 0.0, 0.0, 10.0};
  env.beta_root = {0.0, 0.1, 1.0, 1.0};
  env.discount = 0.95;
  env.attackers = {bline_attacker()};
  env.attack_path = {0};

  std::vector<Intervention> actions = {
      Intervention{}, Intervention{InterventionType::Restore, 0, -1}};
  MarkovState rooted = initial_state(env);
  rooted.intrusion[0] = Intrusion::Root;

  std::function<double(const MarkovState&, int, int*)> expectimax =
      [&](const MarkovState& s, int depth, int* best_index) -> double {
    if (depth >= 2) return 0.0;
    double best = -1e300;
    int best_i = 0;
    for (size_t i = 0; i < actions.size(); ++i) {
      MarkovState next =
          scm_transition(env, s, actions[i], {true, 0, 0}, false);
      double v = stage_reward(env, next) -
                 intervention_cost(env, actions[i]) +
                 env.discount * expectimax(next, depth + 1, nullptr);
      if (v > best + 1e-12) {
        best = v;
        best_i = static_cast<int>(i);
      }
    }
    if (best_index != nullptr) *best_index = best_i;
    return best;
  };
  int oracle_index = -1;
  expectimax(rooted, 0, &oracle_index);

  ParticleSet belief;
  belief.particles.assign(200, rooted);
  PomcpConfig cfg;
  cfg.iterations = 200;
  cfg.ucb_c = 5.0;
  cfg.rollout_depth = 2;
  cfg.max_depth = 2;
  cfg.pruning = false;
  cfg.action_whitelist = actions;
  PomcpResult r = pomcp_search(env, belief, cfg, seed);
  bool match = r.action == actions[static_cast<size_t>(oracle_index)];
  add(rep, "causal", "planner matches exhaustive search on the toy", match,
      std::string("chose ") +
          (r.action.type == InterventionType::Restore ? "restore" : "none") +
          ", oracle picked " + (oracle_index == 1 ? "restore" : "none"));

  // Particle filter vs the exact enumeration filter.
  ScmEnvironment fenv = ScmEnvironment::example(2);
  fenv.noise_base = 0.2;
  fenv.noise_per_client = 0.0;
  fenv.arrival_dist = {0.6, 0.4};
  fenv.departure_dist = {0.7, 0.3};
  const int m = 5000;
  ParticleSet ps = initial_particles(fenv, m, seed + 1);
  std::map<std::string, std::pair<MarkovState, double>> exact;
  MarkovState truth = initial_state(fenv);
  exact[markov_key(truth)] = {truth, 1.0};
  Intervention iv;
  double tv = 0.0;
  for (int t = 1; t <= 3; ++t) {
    StepResult step = scm_step(fenv, truth, iv, seed + 100 + t);
    truth = step.state;
    std::map<std::string, std::pair<MarkovState, double>> next;
    for (const auto& [key, entry] : exact) {
      for (int eo = 0; eo < 2; ++eo) {
        double pe = eo ? fenv.exploit_success : 1.0 - fenv.exploit_success;
        for (size_t ar = 0; ar < fenv.arrival_dist.size(); ++ar) {
          for (size_t de = 0; de < fenv.departure_dist.size(); ++de) {
            double pr = entry.second * pe * fenv.arrival_dist[ar] *
                        fenv.departure_dist[de];
            if (pr <= 0.0) continue;
            MarkovState nxt = scm_transition(
                fenv, entry.first, iv,
                {eo == 1, static_cast<int>(ar), static_cast<int>(de)}, false);
            double w = observation_likelihood(fenv, nxt, iv, step.obs);
            if (w <= 0.0) continue;
            auto& slot = next[markov_key(nxt)];
            slot.first = nxt;
            slot.second += pr * w;
          }
        }
      }
    }
    double total = 0.0;
    for (const auto& [key, entry] : next) total += entry.second;
    for (auto& [key, entry] : next) entry.second /= total;
    exact = std::move(next);
    ps = particle_update(fenv, ps, iv, step.obs, seed + 200 + t);
  }
  std::map<std::string, double> empirical;
  for (const MarkovState& p : ps.particles) {
    empirical[markov_key(p)] += 1.0 / static_cast<double>(m);
  }
  tv = 0.0;
  std::set<std::string> keys;
  for (const auto& [k, v] : exact) keys.insert(k);
  for (const auto& [k, v] : empirical) keys.insert(k);
  for (const std::string& k : keys) {
    double a = exact.count(k) ? exact.at(k).second : 0.0;
    double b = empirical.count(k) ? empirical.at(k) : 0.0;
    tv += std::abs(a - b);
  }
  tv *= 0.5;
  add(rep, "causal", "particle filter tracks the exact filter", tv <= 0.05,
      "total variation " + num(tv));
}

}  // namespace

std::vector<std::string> oracle_suites() {
  return {"dp-core", "stopping", "stopgame",    "decomp",
          "tolerance", "conjectural", "causal"};
}

OracleReport oracle_check(const std::string& suite, uint64_t seed) {
  OracleReport rep;
  if (suite.empty()) {
    for (const std::string& name : oracle_suites()) {
      add(rep, name, "available", true, "run with --suite " + name);
    }
    return rep;
  }
  bool known = false;
  auto want = [&](const char* name) {
    bool hit = suite == name || suite == "all";
    known = known || suite == name;
    return hit;
  };
  if (want("dp-core")) oracle_dp(rep, seed);
  if (want("stopping")) oracle_stopping(rep, seed);
  if (want("stopgame")) oracle_stopgame(rep, seed);
  if (want("decomp")) oracle_decomp(rep, seed);
  if (want("tolerance")) oracle_tolerance(rep, seed);
  if (want("conjectural")) oracle_conjectural(rep, seed);
  if (want("causal")) oracle_causal(rep, seed);
  if (!known && suite != "all") {
    throw ConfigError("unknown oracle suite: \"" + suite +
                      "\"; run with an empty suite name to list them");
  }
  return rep;
}

std::string oracle_report_text(const OracleReport& report) {
  std::ostringstream out;
  for (const OracleEntry& e : report.entries) {
    out << (e.pass ? "PASS" : "FAIL") << " [" << e.suite << "] " << e.name;
    if (!e.detail.empty()) out << " — " << e.detail;
    out << '\n';
  }
  out << (report.all_pass ? "all checks passed" : "some checks FAILED")
      << '\n';
  return out.str();
}

}  // namespace resp
