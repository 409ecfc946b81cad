#pragma once

#include <array>
#include <functional>
#include <stdexcept>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/optimize.hpp"
#include "resp/rng.hpp"

namespace resp {

// Two-level intrusion-tolerance control. The local level is a recovery game
// on one node (healthy/compromised, recover/wait, noisy alert observations);
// the global level is a replication chain over healthy-node counts with an
// average-cost objective and an availability constraint.

// --- Local recovery game ---------------------------------------------------

// Attacker strategy: probability of attacking given the node state
// (0 = healthy, 1 = compromised) and the controller's belief in compromise.
using RecoveryAttacker = std::function<double(int s, double belief_c)>;

RecoveryAttacker recovery_always_attack();
RecoveryAttacker recovery_never_attack();

struct RecoveryGameParams {
  double p_attack = 0.05;  // success probability of one attack step
  double p_crash = 0.01;   // per-step crash probability (absorbing)
  double eta = 2.0;        // intrusion-vs-recovery cost weight, > 1
  int btr = 0;             // bounded time to recovery; 0 means unbounded
  std::vector<double> obs_false;   // alert distribution without an attack
  std::vector<double> obs_attack;  // alert distribution under an attack

  bool btr_finite() const { return btr > 0; }
  void validate() const;
  // eta = 2, p_attack = 0.05, p_crash = 0.01, Beta-Binomial alert rows.
  static RecoveryGameParams defaults(int obs_trials = 100);
};

// Per-step cost: eta * s * (1 - a) + a with s, a in {0, 1}.
double recovery_cost(int s, int a, double eta);

// The node POMDP under a state-conditioned attack probability, with the
// crash absorbed into the discount factor 1 - p_crash. States {H=0, C=1},
// actions {W=0, R=1}. Rewards carry a negative sign (the solvers maximize).
FinitePomdp build_recovery_pomdp(const RecoveryGameParams& params,
                                 const std::array<double, 2>& attack_prob);

// Exact one-step belief filter: returns the posterior P(compromised) after
// taking `a_ctrl` and observing `obs`, marginalizing the attacker's action
// under `att`. Throws RealizabilityError on zero predictive mass.
double recovery_belief_update(const RecoveryGameParams& params,
                              double belief_c, int a_ctrl, int obs,
                              const RecoveryAttacker& att);

// Per-time recovery thresholds on the belief. With a finite bounded time to
// recovery d = btr - 1 thresholds are used and recovery is forced at the
// deadline; otherwise a single stationary threshold.
struct RecoveryThresholds {
  std::vector<double> theta;  // each in [0, 1]

  void validate() const;
  // tau counts steps since the last recovery, starting at 1.
  bool recover(double belief_c, int tau, int btr) const;
};

// Discounted infinite-horizon cost of a threshold policy (crash folded into
// the discount), truncated at `horizon`.
double simulate_recovery_discounted(const RecoveryGameParams& params,
                                    const RecoveryThresholds& thr,
                                    const RecoveryAttacker& att, RngStream rng,
                                    int horizon);

struct RecoveryEpisode {
  double cost = 0.0;  // cumulative until the crash
  int steps = 0;
};

// Explicit-crash simulation: cost accumulates undiscounted until the node
// crashes (geometric with p_crash), capped at max_steps.
RecoveryEpisode simulate_recovery_until_crash(const RecoveryGameParams& params,
                                              const RecoveryThresholds& thr,
                                              const RecoveryAttacker& att,
                                              RngStream rng, int max_steps);

enum class RecoveryOptimizer { Spsa, Cem };

struct RecoveryBrConfig {
  RecoveryOptimizer optimizer = RecoveryOptimizer::Cem;
  SpsaConfig spsa;
  CemConfig cem;
  int episodes_per_eval = 50;
  int horizon = 800;

  RecoveryBrConfig() {
    spsa.common_random_numbers = true;
    spsa.epsilon = 0.602;
    spsa.lambda = 0.101;
    spsa.clip_lo = -6.0;
    spsa.clip_hi = 6.0;
    cem.iterations = 30;
    cem.population = 60;
  }
};

// Threshold best response against a fixed attacker: black-box minimization
// of the simulated discounted cost over the threshold vector (thresholds
// parameterized through a sigmoid to stay in [0, 1]).
RecoveryThresholds recovery_best_response(const RecoveryGameParams& params,
                                          const RecoveryAttacker& att,
                                          const RecoveryBrConfig& cfg,
                                          uint64_t seed);

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
};

// Average cost per step of the node's lifetime: the mean over explicit-crash
// episodes of (cumulative cost / lifetime length). The always-recover policy
// scores exactly 1 under this metric.
CostEstimate recovery_average_cost(const RecoveryGameParams& params,
                                   const RecoveryThresholds& thr,
                                   const RecoveryAttacker& att, int episodes,
                                   int max_steps, uint64_t seed);

// --- Global replication game ------------------------------------------------

struct ReplicationCmdp {
  int max_nodes = 13;            // largest healthy-node count s_max
  int tolerance_f = 2;           // service works while s > tolerance_f
  double availability_floor = 0.9;  // epsilon_A
  // transition[s][a][s'] with a in {0 = keep, 1 = add}, attacker folded in
  std::vector<std::vector<std::vector<double>>> transition;

  int state_count() const { return max_nodes + 1; }
  void validate(bool require_unichain = false) const;
};

// Helper composing the replication transition from independent per-node
// survival: each healthy node stays healthy with probability 1 - p_fail, a
// controller addition arrives healthy, counts cap at max_nodes. `smoothing`
// mixes in a uniform row to make every entry positive (unichain use).
std::vector<std::vector<std::vector<double>>> binomial_replication_transition(
    int max_nodes, double p_fail, double smoothing = 0.0);

struct OccupancyMeasure {
  std::vector<double> rho;  // [s * 2 + a], nonnegative, sums to 1

  double at(int s, int a) const { return rho[static_cast<size_t>(s) * 2 + static_cast<size_t>(a)]; }
  double state_marginal(int s) const { return at(s, 0) + at(s, 1); }
};

struct CmdpSolution {
  std::vector<double> policy;  // P[add | s]; forced to 1 for s <= f
  OccupancyMeasure occupancy;
  double avg_cost = 0.0;
};

// Occupancy-measure linear program for the availability-constrained
// average-cost best response. Zero-mass states get "add" with probability 1.
// Throws CmdpInfeasible when the availability floor cannot be met; any
// post-solve constraint violation above 1e-6 throws std::runtime_error.
struct CmdpInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

CmdpSolution cmdp_best_response_lp(const ReplicationCmdp& cmdp);

// Decomposition of a policy into kappa * 1{s <= beta1} + (1 - kappa) *
// 1{s <= beta2}: all-one states, then at most one randomized band, then
// zeros. Failure lists the states breaking the band structure.
struct ThresholdMixture {
  bool ok = false;
  double kappa = 1.0;
  int beta1 = 0;  // larger threshold
  int beta2 = 0;  // smaller threshold
  std::vector<int> violations;
};

ThresholdMixture verify_threshold_mixture(const std::vector<double>& policy,
                                          int tolerance_f,
                                          double tol = 1e-9);

// --- Reliability analytics ---------------------------------------------------

// Mean hitting time of {s <= f} from s1 under a passive chain (failure set
// absorbing). Throws std::invalid_argument when the system is singular,
// i.e. the failure set is not reached almost surely.
double mttf(const std::vector<std::vector<double>>& transition, int f, int s1);

// R(t) = P[still above the tolerance threshold after t steps].
double reliability(const std::vector<std::vector<double>>& transition, int f,
                   int s1, int t);

}  // namespace resp
