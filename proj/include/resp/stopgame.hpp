#pragma once

#include <functional>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/optimize.hpp"
#include "resp/rng.hpp"
#include "resp/stopping.hpp"

namespace resp {

// Zero-sum stopping game between a defender with L stop actions and an
// attacker who starts and may abort an intrusion. The defender observes
// noisy alerts; the attacker sees everything, including the defender's
// belief.
struct StoppingGame {
  int stops_total = 7;
  std::vector<double> stop_success;  // phi_l, index l-1, in (0, 1]
  double reward_stop = 20.0;         // R_st > 0
  double cost_stop = -2.0;           // R_cost < 0
  double cost_intrusion = -1.0;      // R_int < 0
  double discount = 0.99;
  std::vector<double> obs_no_intrusion;
  std::vector<double> obs_intrusion;

  int observation_count() const {
    return static_cast<int>(obs_no_intrusion.size());
  }
  double phi(int l) const { return stop_success.at(static_cast<size_t>(l) - 1); }
  void validate() const;

  // Reference instantiation: R_st=20, R_cost=-2, R_int=-1, gamma=0.99,
  // phi_l = 1/(2l). Observations default to the Beta-Binomial pair.
  static StoppingGame benchmark(int stops_total);
};

// Dense per-level tables. State index: 0, 1, 2 = terminal.
struct StopGameTables {
  int stops_total = 0;
  // transition[l-1][s][a_def][a_att][s'], reward[l-1][s][a_def][a_att]
  std::vector<double> transition;
  std::vector<double> reward;

  double p(int l, int s, int a_def, int a_att, int s2) const {
    return transition[((((static_cast<size_t>(l) - 1) * 3 + s) * 2 + a_def) *
                           2 +
                       a_att) *
                          3 +
                      s2];
  }
  double& p(int l, int s, int a_def, int a_att, int s2) {
    return transition[((((static_cast<size_t>(l) - 1) * 3 + s) * 2 + a_def) *
                           2 +
                       a_att) *
                          3 +
                      s2];
  }
  double r(int l, int s, int a_def, int a_att) const {
    return reward[(((static_cast<size_t>(l) - 1) * 3 + s) * 2 + a_def) * 2 +
                  a_att];
  }
  double& r(int l, int s, int a_def, int a_att) {
    return reward[(((static_cast<size_t>(l) - 1) * 3 + s) * 2 + a_def) * 2 +
                  a_att];
  }
};

StopGameTables build_stopping_game(const StoppingGame& game);

// Strategies return the probability of the stop action. The attacker's
// stop action starts the intrusion in s = 0 and aborts it in s = 1.
using DefenderStrategy = std::function<double(double b1, int l)>;
using AttackerStrategy = std::function<double(double b1, int s, int l)>;

// 2L parameters: entries 1..L gate continuing in s = 0 (the attacker waits
// while the defender's belief is high), entries L+1..2L gate aborting in
// s = 1.
struct AttackerThresholds {
  std::vector<double> theta;

  double threshold(int i) const;  // sigmoid(theta[i-1]), 1-based
  void validate() const;
};

DefenderStrategy defender_smooth_strategy(ThresholdVector theta);
DefenderStrategy defender_hard_strategy(std::vector<double> alphas);
AttackerStrategy attacker_smooth_strategy(AttackerThresholds theta,
                                          int stops_total);
// Hard thresholds for the single-stop grid oracle: attack iff b1 < beta0,
// abort iff b1 >= beta1.
AttackerStrategy attacker_hard_strategy(double beta0, double beta1);
AttackerStrategy attacker_never_attack();
AttackerStrategy attacker_always_attack();

// Uniform mixtures over past best responses. Acting samples one element per
// episode; the belief conjecture averages the action probabilities.
struct DefenderMixture {
  std::vector<ThresholdVector> buffer;
};
struct AttackerMixture {
  std::vector<AttackerThresholds> buffer;
};

DefenderStrategy defender_mixture_average(const DefenderMixture& mix);
AttackerStrategy attacker_mixture_average(const AttackerMixture& mix,
                                          int stops_total);

// One-sided belief update: the attacker's action is marginalized under the
// conjectured attacker strategy. Throws RealizabilityError when the
// observation has no predictive mass.
double game_belief_update(const StoppingGame& game, double b1, int l,
                          int a_def, int obs, const AttackerStrategy& conj);

struct GameEpisode {
  double return_defender = 0.0;  // discounted
  int length = 0;
  bool capped = false;
};

GameEpisode simulate_game_episode(const StoppingGame& game,
                                  const DefenderStrategy& def,
                                  const AttackerStrategy& att_act,
                                  const AttackerStrategy& att_conj,
                                  RngStream rng, int max_length = 1000);

struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int episodes = 0;
};

// Monte-Carlo defender value; per episode the samplers pick the acting
// strategies (mixture semantics), the conjecture stays fixed.
ValueEstimate estimate_defender_value(
    const StoppingGame& game,
    const std::function<DefenderStrategy(RngStream&)>& def_sampler,
    const std::function<AttackerStrategy(RngStream&)>& att_sampler,
    const AttackerStrategy& att_conj, int episodes, RngStream rng,
    int max_length = 1000);

ValueEstimate estimate_defender_value(const StoppingGame& game,
                                      const DefenderStrategy& def,
                                      const AttackerStrategy& att,
                                      int episodes, RngStream rng,
                                      int max_length = 1000);

struct BestResponseBudget {
  SpsaConfig spsa;
  int episodes_per_eval = 50;
  int max_length = 1000;
  // Independent ascent runs from fresh initial points; the candidate with
  // the best common-stream evaluation wins. Only applies when the caller
  // does not pin the initial point.
  int restarts = 3;

  BestResponseBudget() {
    spsa.common_random_numbers = true;
    spsa.clip_lo = -6.0;
    spsa.clip_hi = 6.0;
    // annealing gain with a slowly shrinking perturbation; the reverse
    // combination never anneals and random-walks into sigmoid saturation
    spsa.epsilon = 0.602;
    spsa.lambda = 0.101;
  }
};

// Learns a defender threshold vector against a fixed attacker strategy by
// simultaneous-perturbation ascent on the simulated discounted return.
// theta0 empty -> fresh uniform initialization from the stream.
ThresholdVector best_response_defender(const StoppingGame& game,
                                       const AttackerStrategy& att,
                                       const BestResponseBudget& budget,
                                       RngStream rng,
                                       std::vector<double> theta0 = {});

// Learns attacker thresholds against a fixed defender. The defender's
// belief evolves under `att_conj` (the strategy the defender conjectures),
// not under the candidate being optimized: a best-responding deviation is
// invisible to the defender's filter.
AttackerThresholds best_response_attacker(const StoppingGame& game,
                                          const DefenderStrategy& def,
                                          const AttackerStrategy& att_conj,
                                          const BestResponseBudget& budget,
                                          RngStream rng,
                                          std::vector<double> theta0 = {});

struct ExploitabilityResult {
  double delta = 0.0;      // J_D(def_br, att) - J_D(def, att_br)
  double std_error = 0.0;  // combined Monte-Carlo error of the two terms
  double value_defender_br = 0.0;
  double value_attacker_br = 0.0;
  ThresholdVector defender_br;
  AttackerThresholds attacker_br;
};

ExploitabilityResult exploitability(const StoppingGame& game,
                                    const DefenderMixture& def,
                                    const AttackerMixture& att,
                                    const BestResponseBudget& budget,
                                    int eval_episodes, RngStream rng);

// Strategy-level variant for non-threshold profiles (e.g. hard-threshold
// grid equilibria): samplers pick the acting strategies per episode, the
// averages drive the best responses and the belief conjecture.
ExploitabilityResult exploitability(
    const StoppingGame& game,
    const std::function<DefenderStrategy(RngStream&)>& def_sampler,
    const DefenderStrategy& def_avg,
    const std::function<AttackerStrategy(RngStream&)>& att_sampler,
    const AttackerStrategy& att_avg, const BestResponseBudget& budget,
    int eval_episodes, RngStream rng);

struct TfpConfig {
  double target_delta = 0.2;
  int max_iterations = 50;
  BestResponseBudget budget;
  int eval_episodes = 200;
};

struct TfpTraceRow {
  int iteration = 0;
  double delta = 0.0;
  double std_error = 0.0;
  double value_defender_br = 0.0;
  double value_attacker_br = 0.0;
};

struct TfpResult {
  DefenderMixture defender;
  AttackerMixture attacker;
  std::vector<TfpTraceRow> trace;
  bool converged = false;
  double final_delta = 0.0;
};

// Fictitious play over threshold strategies: each iteration both players
// learn a best response against the opponent's current mixture, the
// responses are appended, and the mixtures' exploitability is re-estimated.
TfpResult t_fp(const StoppingGame& game, const TfpConfig& cfg, uint64_t seed);

// Brute-force matrix-game oracle for a single-stop instance: hard threshold
// grids for both players, Monte-Carlo payoff matrix with common episode
// streams, exact mixed equilibrium of the sampled matrix by linear
// programming.
struct GridEquilibrium {
  std::vector<double> grid;          // shared threshold grid
  std::vector<double> defender_mix;  // over grid points (alpha)
  std::vector<double> attacker_mix;  // over (beta0, beta1) pairs, row-major
  double value = 0.0;
  std::vector<std::vector<double>> payoff;  // [def][att]
};

GridEquilibrium grid_equilibrium_single_stop(const StoppingGame& game,
                                             int grid_points, int episodes,
                                             uint64_t seed,
                                             int max_length = 1000);

}  // namespace resp
