#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/optimize.hpp"
#include "resp/rng.hpp"

namespace resp {

// Graph-structured intrusion-response game. The infrastructure is a tree
// rooted at a gateway (node id 0); the remaining nodes are partitioned into
// workflows (subtrees). Each node carries a zone id; two special zones mark
// a node as shut down or redirected (inactive in both cases).
struct InfraGraph {
  int node_count = 0;            // regular nodes 1..node_count
  std::vector<int> parent;       // size node_count + 1; parent[0] = -1
  std::vector<int> workflow;     // size node_count + 1; workflow[0] unused
  int workflow_count = 0;
  std::vector<int> zone;         // initial zone per node, size node_count + 1
  int zone_count = 5;
  int shutdown_zone = 3;
  int redirect_zone = 4;

  // Tree rooted at the gateway; every regular node in exactly one workflow;
  // workflows are subtrees that only meet at the gateway.
  void validate() const;
  // Node i plus all its ancestors up to and including the gateway.
  int ancestor_count(int i) const;
  bool zone_active(int z) const {
    return z != shutdown_zone && z != redirect_zone;
  }

  // Two chains of three nodes under the gateway, one workflow each.
  static InfraGraph example_six();
  // Gateway plus a single node.
  static InfraGraph single_node();
};

// Per-node attack state: 0 = undiscovered, 1 = reconnoitred, 2 = compromised.
constexpr int kAttackStates = 3;

// Local action sets. Defender: 0 = null, 1..zone_count = migrate to zone
// j-1, zone_count+1 = access control (revoke, keeps the zone). Attacker:
// 0 = null, 1 = reconnaissance, 2 = brute-force, 3 = exploit.
constexpr int kAttackerActions = 4;

struct LocalDynamics {
  double p_recon = 1.0;       // success probability of reconnaissance
  double p_bruteforce = 0.3;  // compromise probability of brute-force
  double p_exploit = 0.4;     // compromise probability of exploit
  double eta = 0.4;           // workflow-utility weight
  double k = 1.0;             // proportionality constant of the utility
  double discount = 0.9;
  std::vector<double> action_costs;  // per defender action, index 0 = null
  std::vector<std::vector<double>> obs;  // z(o | attack state), 3 rows

  int defender_actions(int zone_count) const { return zone_count + 2; }
  void validate(int zone_count) const;

  static LocalDynamics defaults(int zone_count);
};

// Attacker local strategy conditioned on the node attack state: a
// distribution over the four local actions per state.
using LocalAttackerTable = std::array<std::array<double, kAttackerActions>,
                                      kAttackStates>;

// The static opponent used in the evaluation: recon w.p. 0.2 when hidden,
// brute/exploit w.p. 0.15 each when discovered, idle when compromised.
LocalAttackerTable static_attacker_table();
LocalAttackerTable passive_attacker_table();

// Node-local subgame produced by the decomposition: everything needed to
// reason about one node independently of the rest of the graph.
struct NodeSubgame {
  int node = 0;
  int workflow = 0;
  int ancestor_count = 1;
  int initial_zone = 0;
  int zone_count = 5;
  int shutdown_zone = 3;
  int redirect_zone = 4;
  LocalDynamics dyn;

  bool zone_active(int z) const {
    return z != shutdown_zone && z != redirect_zone;
  }
};

std::vector<NodeSubgame> decompose(const InfraGraph& graph,
                                   const LocalDynamics& dyn);

// Per-node utility: eta * k * |an(i)| * active - intrusion - action cost.
double node_utility(int active_ancestors, int active, int intrusion,
                    int a_def, const std::vector<double>& action_costs,
                    double eta, double k);

// Attack-state transition row for one node given the local actions.
// A defensive action resets the state to 0 before the attacker acts has no
// effect; per the model any defensive action leads to state 0.
std::array<double, kAttackStates> attack_transition(
    const LocalDynamics& dyn, int s, int a_att, bool defensive);

// The two stopping-problem transition matrices: continue (progression with
// recon probability p and compromise probability q) and stop (reset).
std::array<std::array<double, 3>, 3> stopping_matrix_continue(double p,
                                                              double q);
std::array<std::array<double, 3>, 3> stopping_matrix_stop();

// Marginal progression probabilities induced by an attacker table.
double recon_probability(const LocalDynamics& dyn,
                         const LocalAttackerTable& att);
double compromise_probability(const LocalDynamics& dyn,
                              const LocalAttackerTable& att);

// Linear switching curve over the 2-simplex belief (b0, b1, b2):
// stop iff b1 + theta1 * b2 - theta2 > 0 with theta1 >= 1, theta2 > 0.
struct SwitchingCurvePolicy {
  double theta1 = 1.0;
  double theta2 = 0.5;

  void validate() const;
  bool stop(const std::array<double, 3>& belief) const {
    return belief[1] + theta1 * belief[2] - theta2 > 0.0;
  }
  // Unconstrained reparameterization used by the fitting routine:
  // theta1 = 1 + softplus(x1), theta2 = softplus(x2).
  static SwitchingCurvePolicy from_unconstrained(double x1, double x2);
};

struct LocalDefenderPolicy {
  std::vector<int> zone_action;  // defensive action to take, per zone
  SwitchingCurvePolicy curve;
};

// The node-local stopping POMDP for a fixed attacker table: 3 attack
// states, actions {continue, stop}. Stop applies the zone's defensive
// action; the zone itself is held at the subgame's initial zone.
FinitePomdp build_node_stopping_pomdp(const NodeSubgame& sub,
                                      const LocalAttackerTable& att,
                                      const std::vector<int>& zone_action);

struct LocalBrBudget {
  SpsaConfig spsa;
  int episodes_per_eval = 30;
  int horizon = 100;
  int restarts = 3;
  int grid_points = 21;  // belief grid per simplex edge (attacker side)

  LocalBrBudget() {
    spsa.common_random_numbers = true;
    spsa.epsilon = 0.602;
    spsa.lambda = 0.101;
    spsa.clip_lo = -6.0;
    spsa.clip_hi = 6.0;
    spsa.iterations = 100;
  }
};

// Which-action zone MDP solved by value iteration, then the when-to-act
// switching curve fitted by simultaneous-perturbation ascent on the
// node-local stopping problem.
LocalDefenderPolicy local_best_response_defender(const NodeSubgame& sub,
                                                 const LocalAttackerTable& att,
                                                 const LocalBrBudget& budget,
                                                 RngStream rng);

// Belief grid over the 2-simplex: points with coordinates i/(g-1) summing
// to 1; index <-> coordinate helpers.
struct BeliefGrid {
  int points_per_edge = 21;
  std::vector<std::array<double, 3>> cells;

  explicit BeliefGrid(int points_per_edge = 21);
  int snap(const std::array<double, 3>& b) const;  // nearest cell, L1
};

// Deterministic attacker policy over (attack state, belief cell).
struct LocalAttackerPolicy {
  int grid_points = 21;
  std::vector<int> action;  // [s * cells + cell]

  int act(int s, int cell, int cells) const { return action[s * cells + cell]; }
  // State-conditioned action frequencies under a uniform cell weighting;
  // used as the defender's conjecture table.
  LocalAttackerTable to_table() const;
};

struct AttackerBrResult {
  LocalAttackerPolicy policy;
  double value = 0.0;        // attacker's value at (s=0, belief e1)
  double disagreement = 0.0; // fraction of adjacent same-state cells that
                             // disagree on the greedy action
  bool too_coarse = false;   // disagreement > 0.2
};

// Tabular value iteration on the attacker's fully observed local MDP over
// (attack state x defender belief grid). The defender mixture acts via its
// averaged stop probability; the defender's filter runs under `conj`.
AttackerBrResult local_best_response_attacker(
    const NodeSubgame& sub, const std::vector<LocalDefenderPolicy>& def_mix,
    const LocalAttackerTable& conj, const LocalBrBudget& budget);

// --- Composite game -------------------------------------------------------

struct CompositeEpisode {
  double utility = 0.0;  // discounted, defender's sign
  int length = 0;
};

// One episode of the full graph game under per-node policies. Defender
// policies and attacker tables/policies are per node (index node-1).
CompositeEpisode simulate_composite_episode(
    const InfraGraph& graph, const LocalDynamics& dyn,
    const std::vector<LocalDefenderPolicy>& def,
    const std::vector<LocalAttackerPolicy>& att,
    const std::vector<LocalAttackerTable>& conj, const BeliefGrid& grid,
    RngStream rng, int horizon = 100);

struct DfpConfig {
  double target_delta = 0.05;
  int max_iterations = 10;
  LocalBrBudget budget;
  int eval_episodes = 100;
  int horizon = 100;
  bool parallel = false;
};

struct DfpTraceRow {
  int iteration = 0;
  double exploitability = 0.0;
  double std_error = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> node_defender_br_values;
};

struct DfpResult {
  std::vector<std::vector<LocalDefenderPolicy>> defender;  // [node-1][k]
  std::vector<std::vector<LocalAttackerPolicy>> attacker;  // [node-1][k]
  std::vector<DfpTraceRow> trace;
  bool converged = false;
  double final_delta = 0.0;
};

// Decompositional fictitious play: per iteration, independent per-node best
// responses for both players (parallelizable with per-node substreams),
// uniform mixture averaging, exploitability estimated by paired simulation
// of the composite game.
DfpResult dfp(const InfraGraph& graph, const LocalDynamics& dyn,
              const DfpConfig& cfg, uint64_t seed);

// CSV with header: iteration,exploitability,std_error,wall_time_s followed
// by one value column per node.
std::string dfp_trace_csv(const DfpResult& result);

}  // namespace resp
