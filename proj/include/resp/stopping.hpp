#pragma once

#include <functional>
#include <string>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/optimize.hpp"
#include "resp/rng.hpp"

namespace resp {

// Intrusion-prevention model with L stop actions. The system starts without
// an intrusion (s = 0); an intrusion begins with probability p per step and
// is absorbing until the final stop. Rewards: service while running, a
// penalty while an intrusion is active, a bonus for stopping during one.
struct MultiStopModel {
  int stops_total = 1;
  double intrusion_probability = 0.01;
  double reward_stop = 1.0;
  double reward_service = 1.0;
  double reward_intrusion = -1.1;
  std::vector<double> obs_no_intrusion;  // z(o | s = 0)
  std::vector<double> obs_intrusion;     // z(o | s = 1)
  // The cost assumption reward_intrusion / L + reward_service < 0 makes
  // waiting through an intrusion unprofitable; set this to bypass the check.
  bool override_cost_check = false;

  int observation_count() const {
    return static_cast<int>(obs_no_intrusion.size());
  }
  void validate() const;

  // The worked example: L = 1, p = 0.01, R_int = -1.1, R_sla = 1, R_st = 1,
  // Beta-Binomial(10, 0.7, 3) / (10, 1, 0.7) observations.
  static MultiStopModel example();
  // Benchmark rewards: R_st = 50, R_int = -10, R_sla = 1, p = 0.01.
  static MultiStopModel benchmark(int stops_total);
};

// pmf over {0..n} of the Beta-Binomial distribution.
std::vector<double> beta_binomial_pmf(int n, double alpha, double beta);

// True when the 2 x |O| row-stochastic matrix (row0; row1) is totally
// positive of order 2: all second-order minors >= -1e-12.
bool is_tp2_pair(const std::vector<double>& row0,
                 const std::vector<double>& row1);

// Joint POMDP over states (s, stops remaining) plus an absorbing terminal.
// State index: 2*(l-1) + s for l = 1..L; terminal at index 2L.
// Actions: 0 = continue, 1 = stop. Undiscounted with a default horizon.
FinitePomdp build_stopping_pomdp(const MultiStopModel& model);

struct ThresholdVector {
  std::vector<double> theta;

  double threshold(int l) const;  // sigmoid(theta[l-1])
  void validate() const;
};

// Smooth approximation of "stop iff b1 >= threshold": probability of the
// stop action at belief b1 with l stops remaining, exponent -20. Returns 1
// when the threshold is 0 or b1 = 1.
double smooth_threshold_action_prob(const ThresholdVector& theta, int l,
                                    double b1);

// Policy: (belief of intrusion, stops remaining) -> probability of stopping.
using StoppingPolicy = std::function<double(double, int)>;

StoppingPolicy make_smooth_policy(ThresholdVector theta);
StoppingPolicy make_hard_policy(std::vector<double> alphas);

struct StoppingTrajectory {
  std::vector<int> states;
  std::vector<int> observations;  // observation drawn after each transition
  std::vector<double> beliefs;    // belief of intrusion before each action
  std::vector<int> actions;
  std::vector<double> rewards;
  bool truncated = false;  // hit the max-length guard before the final stop

  double total_reward() const;
};

// Simulates one episode from s = 0 with all L stops available. Episodes that
// never spend the final stop are cut at max_length and flagged.
StoppingTrajectory simulate_stopping_episode(const MultiStopModel& model,
                                             const StoppingPolicy& policy,
                                             RngStream rng,
                                             int max_length = 500);

// Exact per-level value functions as upper envelopes over the 2-state belief
// simplex, computed by undiscounted backward induction run to convergence
// (or the horizon cap).
struct StoppingOracle {
  MultiStopModel model;
  std::vector<AlphaVectorSet> levels;  // levels[l-1] over states {0, 1}

  double value(int l, double b1) const;
  double q_continue(int l, double b1) const;
  double q_stop(int l, double b1) const;
};

StoppingOracle solve_stopping_oracle(const MultiStopModel& model,
                                     int horizon = 2000);

enum class ThresholdKind { Interior, AlwaysStop, NeverStop };

struct OracleThresholds {
  std::vector<double> alpha;        // per level; 0 / 1 for degenerate cases
  std::vector<ThresholdKind> kind;  // degenerate cases reported, not hidden
};

// Bisects the belief where the stop and continue values cross, per level,
// to 1e-4.
OracleThresholds extract_oracle_thresholds(const MultiStopModel& model,
                                           int horizon = 2000);
OracleThresholds extract_oracle_thresholds(const StoppingOracle& oracle);

struct TSpsaResult {
  ThresholdVector theta;
  // learning curve: per iteration, (mean return, induced thresholds)
  std::vector<std::pair<double, std::vector<double>>> curve;
  long truncated_episodes = 0;
};

// Threshold learning: simultaneous-perturbation ascent on the smooth
// threshold parameterization, objective = mean undiscounted episode return.
TSpsaResult t_spsa(const MultiStopModel& model, const SpsaConfig& cfg,
                   int episodes_per_eval, uint64_t seed, int max_length = 500);

// Mean return of a policy over n simulated episodes.
double mean_stopping_return(const MultiStopModel& model,
                            const StoppingPolicy& policy, int episodes,
                            RngStream rng, int max_length = 500);

}  // namespace resp
