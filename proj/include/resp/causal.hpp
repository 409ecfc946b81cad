#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "resp/rng.hpp"

namespace resp {

// Structural-causal simulator of a segmented network under an advanced
// persistent threat, a particle-filter belief tracker, and a Monte-Carlo
// tree-search planner whose intervention space is pruned with causal
// structure.

// --- Environment ---------------------------------------------------------------

// Per-node intrusion ladder: the attacker discovers, scans, compromises, and
// finally gains root on a node.
enum class Intrusion : uint8_t {
  Unknown = 0,
  Known = 1,
  Scanned = 2,
  Compromised = 3,
  Root = 4,
};

enum class AttackType : uint8_t {
  None = 0,
  Discover = 1,  // reveals every node of a zone
  Scan = 2,      // scans one node
  Exploit = 3,   // attempts to compromise one node through a vulnerability
  Escalate = 4,  // escalates privileges on a compromised node
  Impact = 5,    // stops the service of a rooted node
};

struct AttackerAction {
  AttackType type = AttackType::None;
  int node = -1;     // targeted node (Scan/Exploit/Escalate/Impact)
  int zone = -1;     // targeted zone (Discover)
  int vuln = 0;      // exploited vulnerability id = decoy catalog index
  bool root = false;  // exploit grants root privileges directly

  bool operator==(const AttackerAction&) const = default;
};

struct ScmEnvironment;

// Deterministic attacker automaton: action as a function of the intrusion
// states only, which keeps the planner state Markov.
using AttackerAutomaton = std::function<AttackerAction(
    const ScmEnvironment& env, const std::vector<Intrusion>& intrusion)>;

struct ScmEnvironment {
  std::vector<int> zone;                           // per-node zone id >= 1
  std::vector<std::pair<int, int>> workflow_edges;  // service dependency i -> j
  int decoy_count = 1;            // size of the decoy catalog
  std::vector<int> exploit_vuln;  // per-node vulnerability id; default 0
  double exploit_success = 0.8;   // P[exploit succeeds]
  std::vector<double> arrival_dist = {1.0};    // pmf over 0..k client arrivals
  std::vector<double> departure_dist = {1.0};  // pmf over 0..k departures
  int max_clients = 10;
  double noise_base = 0.1;        // observation noise = min(cap, base + slope*C)
  double noise_per_client = 0.05;
  double noise_cap = 0.5;
  std::vector<double> psi;        // downtime cost by zone id (index = zone)
  std::vector<double> beta_root;  // root-intrusion cost by zone id
  double restore_cost = 1.0;      // intervention cost of a restore
  double discount = 0.99;
  bool workflow_discovery = true;  // escalation reveals workflow children
  std::vector<AttackerAutomaton> attackers;
  std::vector<double> attacker_prior;  // defaults to uniform
  std::vector<int> attack_path;        // node order used by shipped attackers

  int node_count() const { return static_cast<int>(zone.size()); }
  int zone_count() const;
  double downtime_cost(int z) const;
  double intrusion_cost(int z, Intrusion i) const;
  void validate() const;
  // Two-zone chain instance: node 0 in zone 1, the rest in zone 3, workflow
  // edge 0 -> 1, one decoy, a single shortest-path attacker.
  static ScmEnvironment example(int nodes = 2);
};

// Shipped attacker automata.
AttackerAutomaton bline_attacker();    // straight down the attack path
AttackerAutomaton meander_attacker();  // roots every node of a zone first

// --- Markov state ---------------------------------------------------------------

struct MarkovState {
  std::vector<Intrusion> intrusion;
  std::vector<uint32_t> decoys;   // active-decoy bitmask per node
  std::vector<uint8_t> service;   // 1 = serving
  int clients = 0;
  AttackerAction prev_attack;     // attacker action of the previous step
  int attacker_id = 0;            // index into env.attackers

  bool operator==(const MarkovState&) const = default;
};

MarkovState initial_state(const ScmEnvironment& env);
std::string markov_key(const MarkovState& s);

// --- Interventions ---------------------------------------------------------------

enum class InterventionType : uint8_t {
  None = 0,
  Analyze = 1,  // reveal the node's true intrusion state for one step
  Decoy = 2,    // start a decoy service
  Remove = 3,   // evict the attacker from a compromised node
  Restore = 4,  // reset the node to a secure state, clearing decoys
};

struct Intervention {
  InterventionType type = InterventionType::None;
  int node = -1;
  int decoy = -1;

  bool operator==(const Intervention&) const = default;
};

struct InterventionError : std::domain_error {
  using std::domain_error::domain_error;
};

// Canonical order: none, then per node analyze, decoys, remove, restore.
std::vector<Intervention> full_intervention_set(const ScmEnvironment& env);
double intervention_cost(const ScmEnvironment& env, const Intervention& iv);

// --- Transition kernel ------------------------------------------------------------

struct ExogenousDraw {
  bool exploit_ok = true;
  int arrivals = 0;
  int departures = 0;
};

// Attacker action under the state's automaton (pure function of intrusion).
AttackerAction attacker_action(const ScmEnvironment& env, const MarkovState& s);

// One deterministic endogenous update: apply the intervention (strict mode
// rejects remove/restore whose state precondition fails), let the attacker
// act, then update clients, decoys, intrusion, and services.
MarkovState scm_transition(const ScmEnvironment& env, const MarkovState& s,
                           const Intervention& iv, const ExogenousDraw& exo,
                           bool strict = true);

struct ScmObservation {
  std::vector<int> activity;      // noisy per-node intrusion category
  std::vector<uint32_t> decoys;   // observed exactly
  std::vector<uint8_t> service;   // observed exactly
  int clients = 0;                // observed exactly

  bool operator==(const ScmObservation&) const = default;
};

std::string observation_key(const ScmObservation& o);

ScmObservation sample_observation(const ScmEnvironment& env,
                                  const MarkovState& next,
                                  const Intervention& iv, RngStream rng);
// Likelihood of an observation given the post-transition state; an analyze
// intervention makes the targeted node's activity reading exact.
double observation_likelihood(const ScmEnvironment& env,
                              const MarkovState& next, const Intervention& iv,
                              const ScmObservation& obs);

// Reward of the post-transition state: downtime cost plus intrusion cost,
// both non-positive; intervention costs are charged separately.
double stage_reward(const ScmEnvironment& env, const MarkovState& s);

struct StepResult {
  MarkovState state;
  ScmObservation obs;
  double reward = 0.0;
};

StepResult scm_step(const ScmEnvironment& env, const MarkovState& s,
                    const Intervention& iv, uint64_t seed);

// --- Particle filter ---------------------------------------------------------------

struct ParticleSet {
  std::vector<MarkovState> particles;
  int depletion_count = 0;  // times the filter fell back to pure propagation
};

ParticleSet initial_particles(const ScmEnvironment& env, int m, uint64_t seed);
ParticleSet particle_update(const ScmEnvironment& env, const ParticleSet& ps,
                            const Intervention& iv, const ScmObservation& obs,
                            uint64_t seed);
// Per-node P[intrusion in {Compromised, Root}] under the empirical belief.
std::vector<double> compromise_marginal(const ScmEnvironment& env,
                                        const ParticleSet& ps);

// --- Intervention pruning ------------------------------------------------------------

struct PruneThresholds {
  double low = 0.5;   // remove/restore dropped when P[compromised] < low
  double high = 0.5;  // analyze/decoy dropped when P[compromised] > high
};

// Causal-structure pruning: drops decoy starts for running decoys, recovery
// interventions on likely-clean nodes, and reconnaissance or deception on
// likely-compromised nodes. Thresholds (0, 1) disable pruning entirely.
std::vector<Intervention> prune_interventions(
    const ScmEnvironment& env, const std::vector<double>& compromise_prob,
    const std::vector<uint32_t>& decoys, const PruneThresholds& thresholds,
    const std::vector<Intervention>& candidates);

// --- Tree-search planner ----------------------------------------------------------------

double ucb_score(double mean, double parent_visits, int child_visits,
                 double c);

struct PomcpConfig {
  int iterations = 1000;
  double ucb_c = 0.5;
  int rollout_depth = 4;
  int max_depth = 50;
  bool pruning = true;
  PruneThresholds thresholds;
  std::vector<Intervention> action_whitelist;  // empty = full set
  std::function<Intervention(const MarkovState&)> base_strategy;  // default: none
  std::function<double(const MarkovState&)> base_value;           // default: 0
};

struct PomcpResult {
  Intervention action;
  double value = 0.0;       // mean return of the chosen root child
  int expanded_nodes = 0;   // action nodes created during the search
  int simulations = 0;
};

PomcpResult pomcp_search(const ScmEnvironment& env, const ParticleSet& belief,
                         const PomcpConfig& cfg, uint64_t seed);

// --- Episodes and regret ------------------------------------------------------------------

struct EpisodeConfig {
  PomcpConfig planner;
  int particles = 1000;
  int horizon = 20;
};

struct EpisodeStep {
  int t = 0;
  Intervention action;
  ScmObservation obs;
  double reward = 0.0;     // stage reward minus intervention cost
  int depletions = 0;      // cumulative particle-filter fallbacks
  int tree_size = 0;       // expanded action nodes of this step's search
};

struct EpisodeTrace {
  std::vector<EpisodeStep> steps;
  double value = 0.0;  // discounted return including intervention costs
};

EpisodeTrace run_episode(const ScmEnvironment& env, const EpisodeConfig& cfg,
                         uint64_t seed);
std::string episode_csv(const EpisodeTrace& trace);

// Cumulative regret of per-minute values against a reference optimum:
// n * reference - sum of the values.
double episode_regret(const std::vector<double>& values, double reference);

}  // namespace resp
