#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/rng.hpp"

namespace resp {

// Online learning with adaptive conjectures for a two-player stopping game:
// the state counts compromised servers, the defender recovers (stop) or
// waits, the attacker compromises (stop) or idles. Each player keeps a
// posterior over conjectured model parameters and picks actions by rollout
// on the conjectured model.

// Observation family: parameter -> per-state alert distributions (rows for
// states 0..N, each summing to 1).
using ObsFamily =
    std::function<std::vector<std::vector<double>>(double theta)>;

struct AptGame {
  int server_count = 1;  // N
  double p_attack = 1.0; // success probability of one compromise step
  double cost_p = 1.25;  // intrusion-cost exponent, >= 1
  double cost_q = 1.0;   // recovery cost when no intrusion, > 0
  double cost_r = 2.0;   // recovery gain under intrusion, > 0, 1 > q - r
  double discount = 0.99;
  ObsFamily obs_family;

  void validate() const;
  // Binary-ish default family: theta is the alert probability in compromised
  // states; healthy states alert with probability `healthy_alert`.
  static AptGame example(int server_count = 1, double healthy_alert = 0.2);
};

// Actions for both players: 0 = continue, 1 = stop.
// Per-step cost (defender pays, attacker receives):
// c(s, a_D) = s^p * 1{a_D != stop} + 1{a_D = stop} * (q - r * 1{s > 0}).
double apt_cost(const AptGame& game, int s, int a_def);

// Transition row over next states: defender stop resets to 0; otherwise an
// attacker stop raises the count with probability p_attack (capped at N).
std::vector<double> apt_transition(const AptGame& game, int s, int a_def,
                                   int a_att);

// Explicit tables of the game at a fixed observation parameter.
struct AptTables {
  int state_count = 0;
  int obs_count = 0;
  std::vector<double> transition;         // [((s * 2 + aD) * 2 + aA) * n + s']
  std::vector<std::vector<double>> cost;  // [s][aD]
  std::vector<std::vector<double>> obs;   // [s][o]

  double p(int s, int a_def, int a_att, int s2) const {
    return transition[static_cast<size_t>(
        ((s * 2 + a_def) * 2 + a_att) * state_count + s2)];
  }
};

AptTables build_apt_game(const AptGame& game, double theta);

// Defender-side POMDP against a state-conditioned attack probability
// (rewards are negated costs so the maximizing solvers apply).
FinitePomdp build_apt_defender_pomdp(const AptGame& game, double theta,
                                     const std::vector<double>& attack_prob);

// --- Strategies --------------------------------------------------------------

// Probability of stopping given the defender belief (defender) or the belief
// and the true state (attacker).
using AptDefenderStrategy = std::function<double(const std::vector<double>& b)>;
using AptAttackerStrategy =
    std::function<double(const std::vector<double>& b, int s)>;

// Stop iff P[S >= 1 | b] >= alpha.
AptDefenderStrategy threshold_defender(double alpha);
// Stop with a fixed probability (state 0 only; compromising is impossible
// elsewhere only at the cap, but the mixture is the standard base strategy).
AptAttackerStrategy mixed_attacker(double stop_prob);
// Stop iff s == 0 and P[S >= 1 | b] <= beta.
AptAttackerStrategy threshold_attacker(double beta);

// Exact defender filter under the conjectured parameter and a conjectured
// attacker strategy. Throws RealizabilityError on zero predictive mass.
std::vector<double> apt_belief_update(const AptGame& game, double theta,
                                      const std::vector<double>& b, int a_def,
                                      int obs, const AptAttackerStrategy& att);

// --- Conjecture adaptation ----------------------------------------------------

struct ConjecturePosterior {
  std::vector<double> support;  // parameter values
  std::vector<double> weights;  // probability vector

  void validate() const;
  double mean() const;
  int mode() const;  // lowest index among maximal weights
  static ConjecturePosterior uniform(std::vector<double> support);
};

// All support points received zero likelihood: the feedback is unexplainable
// under every conjecture.
struct ConjectureUpdateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ConjecturePosterior bayes_conjecture_update(const ConjecturePosterior& prior,
                                            const std::vector<double>& likelihood);

// Finite occupancy measure over sampled beliefs.
struct BeliefOccupancy {
  std::vector<std::pair<std::vector<double>, double>> points;
};

// Weighted expected log-likelihood ratio between the feedback distributions
// of the true and conjectured parameters, with -ln 0 = inf and 0 ln 0 = 0.
double discrepancy(const AptGame& game, double true_theta,
                   double conjectured_theta, const BeliefOccupancy& occupancy);

// --- Rollout -----------------------------------------------------------------

struct RolloutConfig {
  int lookahead = 1;        // >= 0; 0 falls back to the base strategy
  int mc_samples = 30;      // Monte-Carlo samples per expectation
  int truncation_depth = 30;  // cost-to-go simulation depth
};

enum class ColPlayer { Defender, Attacker };

// Cost-to-go estimate at (belief, state); the state is ignored for the
// defender (sampled from the belief internally where needed).
using CostToGo =
    std::function<double(const std::vector<double>& b, int s)>;

// Monte-Carlo cost-to-go of the pair (own base strategy, conjectured
// opponent) on the conjectured model, in the player's sign convention
// (defender minimizes c, attacker minimizes -c).
CostToGo base_pair_cost_to_go(const AptGame& game, double theta,
                              ColPlayer player, const AptDefenderStrategy& def,
                              const AptAttackerStrategy& att,
                              const RolloutConfig& cfg, uint64_t seed);

// One lookahead-step rollout action: minimizes the l-step Bellman expression
// on the conjectured model with the supplied tail, lowest index on ties.
// `state` is required for the attacker and ignored for the defender.
int rollout_action(ColPlayer player, const AptGame& game, double theta,
                   const std::vector<double>& belief, int state,
                   const AptDefenderStrategy& conj_def,
                   const AptAttackerStrategy& conj_att, const CostToGo& tail,
                   int lookahead, int mc_samples, RngStream rng);

// --- Conjectural online learning loop ----------------------------------------

struct ColConfig {
  AptGame game;
  std::function<double(int t)> true_theta;  // t -> observation parameter
  ConjecturePosterior theta_def;            // defender's Theta support/prior
  ConjecturePosterior theta_att;            // attacker's (often a singleton)
  std::vector<int> lookahead_support;       // L
  std::vector<double> lookahead_prior;      // mu_1
  int lookahead_def = 1;
  int lookahead_att = 1;  // the attacker's true lookahead
  AptDefenderStrategy base_def;
  AptAttackerStrategy base_att;
  RolloutConfig rollout;
  int horizon = 100;

  void validate() const;
  static ColConfig example();  // single-server toy with defaults
};

struct ColStep {
  int t = 0;
  int state = 0;
  int obs = -1;
  int a_def = 0;
  int a_att = 0;
  double cost = 0.0;
  std::vector<double> belief;
  std::vector<double> theta_posterior;      // rho^(D)
  std::vector<double> lookahead_posterior;  // mu
  double conjecture_theta = 0.0;
  int conjecture_lookahead = 0;
};

struct ColTrace {
  std::vector<ColStep> steps;
  BeliefOccupancy occupancy;  // empirical over visited beliefs
};

ColTrace col_run(const ColConfig& cfg, uint64_t seed);

// CSV: t,state,obs,a_def,a_att,cost, belief..., rho..., mu...
std::string col_trace_csv(const ColTrace& trace);

// Expected discrepancy gap of a posterior: sum (K(theta) - K*) * weight.
double discrepancy_gap(const AptGame& game, double true_theta,
                       const ConjecturePosterior& posterior,
                       const BeliefOccupancy& occupancy);

// --- Berk-Nash analysis of the two-conjecture example -------------------------

// The worked instance: one server, certain compromise, binary alerts with
// true parameters (p, q) = (P[alert | healthy], P[alert | compromised]);
// the two conjectures are the identity alert model (conjecture A: alert iff
// compromised) and the flipped model (conjecture B: alert iff healthy).

// Cost-to-go of the base pair under a conjectured belief-transition
// parameter x: J = (I - gamma * P)^{-1} c with P = [[1-x, x], [1, 0]] and
// c = (0, -1), evaluated by the exact 2x2 closed form.
std::array<double, 2> berk_nash_closed_form_costs(double gamma, double x);

// Stationary weight of belief 0 under the conjecture mixture
// rho_a * P_a + (1 - rho_a) * P_b with P_a parameterized by q and P_b by p.
double berk_nash_stationary_nu0(double p, double q, double rho_a);

struct BerkNashExampleReport {
  // Self-consistent limit of the learning dynamic under the true (p, q).
  int surviving_conjecture = -1;          // 0 = A, 1 = B, -1 = none survives
  std::array<double, 2> nu = {0.0, 0.0};  // occupancy over beliefs {0, 1}
  double rho_a = 0.0;                     // implied posterior weight on A
  std::array<double, 2> discrepancy_by_conjecture = {0.0, 0.0};
  std::vector<int> consistent_set;  // argmin of the discrepancy under nu
  bool rational = false;            // base thresholds are rollout-optimal
  bool consistent = false;          // surviving conjecture in the argmin
  bool stationary = false;          // nu solves the stationarity equation
  bool has_equilibrium = false;
  bool conflict = false;  // consistency and stationarity cannot coexist
};

BerkNashExampleReport check_berk_nash(double p, double q, double gamma);

// --- Client arrival-rate model -------------------------------------------------

// lambda(t) = exp(sum_i psi_i t^i + sum_k chi_k sin(omega_k t + phi_k)).
double arrival_rate(double t, const std::vector<double>& psi,
                    const std::vector<double>& chi,
                    const std::vector<double>& omega,
                    const std::vector<double>& phi);

}  // namespace resp
