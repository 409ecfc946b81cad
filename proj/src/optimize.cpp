#include "resp/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace resp {

std::vector<double> spsa_optimize(const NoisyObjective& objective,
                                  std::vector<double> theta,
                                  const SpsaConfig& cfg, RngStream rng,
                                  std::vector<std::vector<double>>* trace) {
  if (cfg.a <= 0 || cfg.c <= 0 || cfg.A < 0)
    throw std::invalid_argument("spsa: coefficients must be positive");
  const size_t d = theta.size();
  const bool boxed = cfg.clip_lo < cfg.clip_hi;
  auto clip = [&](double x) {
    return boxed ? std::clamp(x, cfg.clip_lo, cfg.clip_hi) : x;
  };
  for (double& x : theta) x = clip(x);
  for (long n = 1; n <= cfg.iterations; ++n) {
    double a_n = cfg.a / std::pow(static_cast<double>(n) + cfg.A, cfg.epsilon);
    double c_n = cfg.c / std::pow(static_cast<double>(n), cfg.lambda);
    RngStream iter = rng.substream("spsa-iter", static_cast<uint64_t>(n));
    std::vector<int> delta(d);
    for (size_t i = 0; i < d; ++i) delta[i] = iter.rademacher();
    std::vector<double> hi(d), lo(d);
    for (size_t i = 0; i < d; ++i) {
      hi[i] = theta[i] + c_n * delta[i];
      lo[i] = theta[i] - c_n * delta[i];
    }
    RngStream eval_hi = iter.substream("high");
    RngStream eval_lo =
        cfg.common_random_numbers ? eval_hi : iter.substream("low");
    double r_hi = objective(hi, eval_hi);
    double r_lo = objective(lo, eval_lo);
    for (size_t i = 0; i < d; ++i)
      theta[i] = clip(theta[i] + a_n * (r_hi - r_lo) / (2.0 * c_n * delta[i]));
    if (trace) trace->push_back(theta);
  }
  return theta;
}

std::vector<double> cem_optimize(const NoisyObjective& objective,
                                 std::vector<double> theta,
                                 const CemConfig& cfg, RngStream rng,
                                 std::vector<std::vector<double>>* trace) {
  if (cfg.population < 2)
    throw std::invalid_argument("cem: population must be at least 2");
  if (cfg.elite_fraction <= 0 || cfg.elite_fraction > 1)
    throw std::invalid_argument("cem: elite fraction must lie in (0, 1]");
  const size_t d = theta.size();
  std::vector<double> mean = theta;
  std::vector<double> stddev(d, cfg.init_std);
  int n_elite = std::max(
      1, static_cast<int>(std::ceil(cfg.elite_fraction * cfg.population)));

  for (long it = 1; it <= cfg.iterations; ++it) {
    RngStream iter = rng.substream("cem-iter", static_cast<uint64_t>(it));
    std::vector<std::vector<double>> samples(cfg.population);
    std::vector<double> scores(cfg.population);
    for (int k = 0; k < cfg.population; ++k) {
      RngStream draw = iter.substream("sample", static_cast<uint64_t>(k));
      samples[k].resize(d);
      for (size_t i = 0; i < d; ++i)
        samples[k][i] = mean[i] + stddev[i] * draw.normal();
      RngStream eval = iter.substream("eval", static_cast<uint64_t>(k));
      scores[k] = objective(samples[k], eval);
    }
    std::vector<int> order(cfg.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return scores[x] > scores[y]; });
    for (size_t i = 0; i < d; ++i) {
      double m = 0.0;
      for (int k = 0; k < n_elite; ++k) m += samples[order[k]][i];
      m /= n_elite;
      double var = 0.0;
      for (int k = 0; k < n_elite; ++k) {
        double dv = samples[order[k]][i] - m;
        var += dv * dv;
      }
      var /= n_elite;
      mean[i] = m;
      stddev[i] = std::max(cfg.min_std, std::sqrt(var));
    }
    if (trace) trace->push_back(mean);
  }
  return mean;
}

}  // namespace resp
