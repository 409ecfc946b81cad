#pragma once

#include <functional>
#include <vector>

#include "resp/mdp.hpp"
#include "resp/rng.hpp"

namespace resp {

// Noisy objective: evaluated at a parameter vector with an explicit stream;
// the caller maximizes.
using NoisyObjective =
    std::function<double(const std::vector<double>&, RngStream&)>;

struct SpsaConfig {
  double a = 1.0;
  double A = 100.0;
  double epsilon = 0.101;  // ascent gain exponent
  double c = 1.0;
  double lambda = 0.602;   // perturbation decay exponent
  long iterations = 100;
  // Evaluate both perturbed points on the same stream. Keeps the episode
  // noise common to the pair, which stops the gradient variance from
  // exploding as c_n shrinks.
  bool common_random_numbers = false;
  // Optional box projection applied to every coordinate after each update
  // (and to the initial point). Keeps sigmoid-style parameterizations out
  // of their flat saturation regions. clip_lo >= clip_hi disables it.
  double clip_lo = 0.0;
  double clip_hi = 0.0;
};

// Two-sided simultaneous-perturbation ascent with Rademacher perturbations:
// one perturbation vector per iteration, two objective evaluations, gradient
// estimate (J+ - J-) / (2 c_n delta_i), update theta += a_n * grad.
std::vector<double> spsa_optimize(const NoisyObjective& objective,
                                  std::vector<double> theta,
                                  const SpsaConfig& cfg, RngStream rng,
                                  std::vector<std::vector<double>>* trace = nullptr);

struct CemConfig {
  int population = 100;
  double elite_fraction = 0.15;
  long iterations = 50;
  double init_std = 1.0;
  double min_std = 1e-3;
};

// Cross-entropy method with an axis-aligned Gaussian sampling distribution;
// per iteration the elite fraction refits the mean and variance.
std::vector<double> cem_optimize(const NoisyObjective& objective,
                                 std::vector<double> theta,
                                 const CemConfig& cfg, RngStream rng,
                                 std::vector<std::vector<double>>* trace = nullptr);

}  // namespace resp
