#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "resp/rng.hpp"

namespace resp {

// Raised when a belief update conditions on an observation whose predictive
// probability is below the realizability floor. Never silently renormalized.
struct RealizabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WorkBudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr long kInfiniteHorizon = -1;

struct FiniteMdp {
  int state_count = 0;
  int action_count = 0;
  std::vector<double> transition;  // [s][a][s'] row-major
  std::vector<double> reward;      // [s][a]
  double discount = 0.0;
  std::vector<double> initial_distribution;
  long horizon = kInfiniteHorizon;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<size_t>(s) * action_count + a) * state_count + s2];
  }
  double& p(int s, int a, int s2) {
    return transition[(static_cast<size_t>(s) * action_count + a) * state_count + s2];
  }
  double r(int s, int a) const { return reward[static_cast<size_t>(s) * action_count + a]; }
  double& r(int s, int a) { return reward[static_cast<size_t>(s) * action_count + a]; }

  static FiniteMdp zeros(int states, int actions, double discount);
  void validate() const;  // throws std::invalid_argument on broken invariants
};

struct FinitePomdp {
  FiniteMdp base;
  int observation_count = 0;
  std::vector<double> observation;  // [s][o] row-major, z(o | s)

  double z(int o, int s) const {
    return observation[static_cast<size_t>(s) * observation_count + o];
  }
  double& z(int o, int s) {
    return observation[static_cast<size_t>(s) * observation_count + o];
  }
  void validate() const;
};

struct BeliefState {
  std::vector<double> p;
  void validate() const;
};

enum class Sense { Maximize, Minimize };

struct AlphaVectorSet {
  std::vector<std::vector<double>> vectors;
  std::vector<int> actions;  // action tag per vector (top-level backup)
  Sense sense = Sense::Maximize;

  double value(const std::vector<double>& belief) const;
  int best_vector(const std::vector<double>& belief) const;  // lowest index on ties
};

struct StepSizeSchedule {
  enum class Kind { RobbinsMonro, SpsaGain };
  Kind kind = Kind::RobbinsMonro;
  // Robbins-Monro / ascent gain: a_n = a / (n + A)^epsilon.
  double a = 1.0, A = 100.0, epsilon = 0.602;
  // Perturbation gain: c_n = c / n^lambda.
  double c = 1.0, lambda = 0.101;

  double gain(long n) const;          // a_n, n >= 1
  double perturbation(long n) const;  // c_n, n >= 1
  void validate() const;
};

struct SolveResult {
  std::vector<double> values;
  std::vector<int> policy;
};

SolveResult value_iterate(const FiniteMdp& mdp, double tolerance);
SolveResult policy_iterate(const FiniteMdp& mdp);

// weights must be strictly positive; solves the standard dual LP for J*.
std::vector<double> solve_mdp_lp(const FiniteMdp& mdp,
                                 const std::vector<double>& weights);

// Generative sampler: (s, a, rng) -> (s', r).
using MdpSampler =
    std::function<std::pair<int, double>(int, int, RngStream&)>;

std::vector<double> q_learn(const MdpSampler& sampler, int state_count,
                            int action_count, double discount,
                            const StepSizeSchedule& schedule, long steps,
                            RngStream rng);

BeliefState belief_update(const FinitePomdp& pomdp, const BeliefState& b,
                          int action, int obs);

struct ExactSolveOptions {
  double work_budget = 1e8;  // reject when (|A||O|)^horizon exceeds this
  bool lp_prune = true;      // exact LP domination prune (pointwise always on)
};

// Exact finite-horizon value function as a pruned alpha-vector set
// (maximization over the reward tables). Incremental cross-sum backups keep
// the enumeration tractable without giving up exactness.
AlphaVectorSet exact_pomdp_solve(const FinitePomdp& pomdp, int horizon,
                                 const ExactSolveOptions& opts = {});

// Serialization (JSON with a schema-version field).
std::string mdp_to_json(const FiniteMdp& mdp);
FiniteMdp mdp_from_json(const std::string& text);
std::string pomdp_to_json(const FinitePomdp& pomdp);
FinitePomdp pomdp_from_json(const std::string& text);

}  // namespace resp
