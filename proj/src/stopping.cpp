#include "resp/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace resp {

namespace {

// A value line over the 2-state belief simplex: value(b1) = at0 * (1 - b1)
// + at1 * b1. Stored as (value at b1 = 0, value at b1 = 1).
struct Line {
  double v0, v1;
  double at(double b1) const { return v0 + (v1 - v0) * b1; }
};

double cross_x(const Line& a, const Line& b) {
  // slope difference is (b.v1 - b.v0) - (a.v1 - a.v0)
  double ds = (b.v1 - b.v0) - (a.v1 - a.v0);
  return (a.v0 - b.v0) / ds;
}

// Exact upper envelope over b1 in [0, 1]; returns the surviving lines.
std::vector<Line> envelope(std::vector<Line> lines) {
  if (lines.size() <= 1) return lines;
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    double sa = a.v1 - a.v0, sb = b.v1 - b.v0;
    if (sa != sb) return sa < sb;
    return a.v0 < b.v0;
  });
  // Among equal slopes keep the highest intercept.
  std::vector<Line> uniq;
  for (const Line& l : lines) {
    if (!uniq.empty() &&
        std::fabs((l.v1 - l.v0) - (uniq.back().v1 - uniq.back().v0)) < 1e-13) {
      uniq.back() = l;  // sorted so later intercept is >= earlier
    } else {
      uniq.push_back(l);
    }
  }
  // Margin-pruned upper hull on [0, 1]: a line survives only if it rises
  // above the envelope of its neighbors by more than kEps somewhere in the
  // interval. Without the margin, floating-point near-duplicates and
  // vanishingly thin segments multiply across backups.
  const double kEps = 1e-7;
  std::vector<Line> out;
  for (const Line& l : uniq) {
    while (!out.empty()) {
      if (out.size() == 1) {
        // l has the larger slope; if it already covers the line at b1 = 0
        // it covers it everywhere.
        if (l.at(0.0) >= out[0].at(0.0) - kEps) {
          out.pop_back();
        } else {
          break;
        }
      } else {
        double x = cross_x(out[out.size() - 2], l);
        x = std::min(1.0, std::max(0.0, x));
        double margin =
            out.back().at(x) - std::max(out[out.size() - 2].at(x), l.at(x));
        if (margin < kEps) {
          out.pop_back();
        } else {
          break;
        }
      }
    }
    // l beats the current envelope furthest at b1 = 1 (largest slope so far).
    if (!out.empty() && l.at(1.0) - out.back().at(1.0) < kEps) continue;
    out.push_back(l);
  }
  return out;
}

double envelope_value(const std::vector<Line>& env, double b1) {
  double best = -1e300;
  for (const Line& l : env) best = std::max(best, l.at(b1));
  return best;
}

struct LevelSets {
  std::vector<std::vector<Line>> by_level;  // index l - 1
};

// One-step backup for a single action whose continuation value is the given
// envelope. r0 / r1 are the immediate rewards in states 0 / 1. Each
// per-observation backprojection term is itself a convex piecewise-linear
// function of the belief, so the backup is the sum of |O| such functions:
// instead of the multiplicative cross-sum we merge their breakpoints, which
// keeps the representation linear in the target size.
std::vector<Line> backup_action(const MultiStopModel& m, double r0, double r1,
                                const std::vector<Line>& target) {
  const double p = m.intrusion_probability;
  const int obs = m.observation_count();

  // Per observation: envelope of backprojected lines plus its breakpoints.
  std::vector<std::vector<Line>> g(obs);
  struct Event {
    double x;
    int o;
  };
  std::vector<Event> events;
  for (int o = 0; o < obs; ++o) {
    double z0 = m.obs_no_intrusion[o];
    double z1 = m.obs_intrusion[o];
    std::vector<Line> lines;
    lines.reserve(target.size());
    for (const Line& t : target)
      lines.push_back({(1 - p) * z0 * t.v0 + p * z1 * t.v1, z1 * t.v1});
    g[o] = envelope(std::move(lines));
    for (size_t j = 0; j + 1 < g[o].size(); ++j)
      events.push_back({cross_x(g[o][j], g[o][j + 1]), o});
  }
  std::sort(events.begin(), events.end(),
            [](const Event& a, const Event& b) { return a.x < b.x; });

  std::vector<int> idx(obs, 0);
  Line sum{r0, r1};
  for (int o = 0; o < obs; ++o) {
    sum.v0 += g[o][0].v0;
    sum.v1 += g[o][0].v1;
  }
  std::vector<Line> cands = {sum};
  for (const Event& e : events) {
    const Line& old = g[e.o][idx[e.o]];
    const Line& nw = g[e.o][idx[e.o] + 1];
    sum.v0 += nw.v0 - old.v0;
    sum.v1 += nw.v1 - old.v1;
    ++idx[e.o];
    if (e.x > 0.0 && e.x < 1.0) cands.push_back(sum);
  }
  return envelope(std::move(cands));
}

LevelSets solve_levels(const MultiStopModel& m, int horizon) {
  const int L = m.stops_total;
  const double r_c0 = m.reward_service;
  const double r_c1 = m.reward_service + m.reward_intrusion / L;
  const double r_s1 = m.reward_stop / L;

  LevelSets cur;
  cur.by_level.assign(L, {Line{0.0, 0.0}});
  std::vector<double> grid;
  for (int i = 0; i <= 512; ++i) grid.push_back(i / 512.0);

  for (int t = 0; t < horizon; ++t) {
    LevelSets next;
    next.by_level.resize(L);
    for (int l = 1; l <= L; ++l) {
      std::vector<Line> cands =
          backup_action(m, r_c0, r_c1, cur.by_level[l - 1]);
      if (l == 1) {
        cands.push_back({0.0, r_s1});
      } else {
        auto stop = backup_action(m, 0.0, r_s1, cur.by_level[l - 2]);
        cands.insert(cands.end(), stop.begin(), stop.end());
      }
      next.by_level[l - 1] = envelope(std::move(cands));
    }
    double diff = 0.0;
    for (int l = 0; l < L; ++l)
      for (double b : grid)
        diff = std::max(diff, std::fabs(envelope_value(next.by_level[l], b) -
                                        envelope_value(cur.by_level[l], b)));
    cur = std::move(next);
    if (diff < 1e-6) break;
  }
  return cur;
}

AlphaVectorSet to_alpha_set(const std::vector<Line>& env) {
  AlphaVectorSet set;
  set.sense = Sense::Maximize;
  for (const Line& l : env) {
    set.vectors.push_back({l.v0, l.v1});
    set.actions.push_back(-1);
  }
  return set;
}

double expected_next_value(const MultiStopModel& m, const AlphaVectorSet& v,
                           double b1) {
  double pred = b1 + (1 - b1) * m.intrusion_probability;
  double total = 0.0;
  for (int o = 0; o < m.observation_count(); ++o) {
    double po = (1 - pred) * m.obs_no_intrusion[o] + pred * m.obs_intrusion[o];
    if (po < 1e-300) continue;
    double post = pred * m.obs_intrusion[o] / po;
    total += po * v.value({1 - post, post});
  }
  return total;
}

}  // namespace

void MultiStopModel::validate() const {
  if (stops_total < 1)
    throw std::invalid_argument("stopping: stops_total must be positive");
  if (intrusion_probability <= 0 || intrusion_probability >= 1)
    throw std::invalid_argument("stopping: p must lie in (0, 1)");
  if (reward_stop <= 0 || reward_service <= 0 || reward_intrusion >= 0)
    throw std::invalid_argument("stopping: reward signs are fixed");
  if (obs_no_intrusion.empty() ||
      obs_no_intrusion.size() != obs_intrusion.size())
    throw std::invalid_argument("stopping: observation rows must match");
  for (const auto* row : {&obs_no_intrusion, &obs_intrusion}) {
    double total = 0.0;
    for (double v : *row) {
      if (v < 0) throw std::invalid_argument("stopping: negative obs mass");
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw std::invalid_argument("stopping: observation row must sum to 1");
  }
  if (!override_cost_check &&
      reward_intrusion / stops_total + reward_service >= 0)
    throw std::invalid_argument(
        "stopping: intrusion cost must exceed service utility "
        "(set override_cost_check to bypass)");
}

MultiStopModel MultiStopModel::example() {
  MultiStopModel m;
  m.stops_total = 1;
  m.intrusion_probability = 0.01;
  m.reward_stop = 1.0;
  m.reward_service = 1.0;
  m.reward_intrusion = -1.1;
  m.obs_no_intrusion = beta_binomial_pmf(10, 0.7, 3.0);
  m.obs_intrusion = beta_binomial_pmf(10, 1.0, 0.7);
  return m;
}

MultiStopModel MultiStopModel::benchmark(int stops_total) {
  MultiStopModel m = example();
  m.stops_total = stops_total;
  m.reward_stop = 50.0;
  m.reward_intrusion = -10.0;
  m.reward_service = 1.0;
  return m;
}

std::vector<double> beta_binomial_pmf(int n, double alpha, double beta) {
  if (n < 0 || alpha <= 0 || beta <= 0)
    throw std::invalid_argument("beta-binomial: bad parameters");
  std::vector<double> pmf(n + 1);
  double log_b = std::lgamma(alpha) + std::lgamma(beta) -
                 std::lgamma(alpha + beta);
  double total = 0.0;
  for (int k = 0; k <= n; ++k) {
    double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                   std::lgamma(n - k + 1.0);
    double log_num = std::lgamma(k + alpha) + std::lgamma(n - k + beta) -
                     std::lgamma(n + alpha + beta);
    pmf[k] = std::exp(log_c + log_num - log_b);
    total += pmf[k];
  }
  for (double& v : pmf) v /= total;
  return pmf;
}

bool is_tp2_pair(const std::vector<double>& row0,
                 const std::vector<double>& row1) {
  if (row0.size() != row1.size()) return false;
  for (size_t i = 0; i < row0.size(); ++i)
    for (size_t j = i + 1; j < row0.size(); ++j)
      if (row0[i] * row1[j] - row0[j] * row1[i] < -1e-12) return false;
  return true;
}

FinitePomdp build_stopping_pomdp(const MultiStopModel& model) {
  model.validate();
  const int L = model.stops_total;
  const int obs = model.observation_count();
  const int terminal = 2 * L;
  FinitePomdp p;
  p.base = FiniteMdp::zeros(2 * L + 1, 2, 1.0);
  p.base.horizon = 500;
  p.observation_count = obs;
  p.observation.assign(static_cast<size_t>(2 * L + 1) * obs, 0.0);
  auto idx = [](int l, int s) { return 2 * (l - 1) + s; };
  const double q = model.intrusion_probability;
  for (int l = 1; l <= L; ++l) {
    for (int s = 0; s <= 1; ++s) {
      int from = idx(l, s);
      // continue: stay at this level, intrusion chain advances
      if (s == 0) {
        p.base.p(from, 0, idx(l, 0)) = 1 - q;
        p.base.p(from, 0, idx(l, 1)) = q;
      } else {
        p.base.p(from, 0, idx(l, 1)) = 1.0;
      }
      // stop: spend one stop, or terminate on the last one
      if (l == 1) {
        p.base.p(from, 1, terminal) = 1.0;
      } else if (s == 0) {
        p.base.p(from, 1, idx(l - 1, 0)) = 1 - q;
        p.base.p(from, 1, idx(l - 1, 1)) = q;
      } else {
        p.base.p(from, 1, idx(l - 1, 1)) = 1.0;
      }
      p.base.r(from, 0) =
          model.reward_service + s * model.reward_intrusion / L;
      p.base.r(from, 1) = s * model.reward_stop / L;
      for (int o = 0; o < obs; ++o)
        p.z(o, from) =
            s == 0 ? model.obs_no_intrusion[o] : model.obs_intrusion[o];
    }
  }
  p.base.p(terminal, 0, terminal) = 1.0;
  p.base.p(terminal, 1, terminal) = 1.0;
  for (int o = 0; o < obs; ++o) p.z(o, terminal) = model.obs_no_intrusion[o];
  p.base.initial_distribution.assign(2 * L + 1, 0.0);
  p.base.initial_distribution[idx(L, 0)] = 1.0;
  p.validate();
  return p;
}

double ThresholdVector::threshold(int l) const {
  return 1.0 / (1.0 + std::exp(-theta.at(static_cast<size_t>(l) - 1)));
}

void ThresholdVector::validate() const {
  for (double v : theta)
    if (!std::isfinite(v))
      throw std::invalid_argument("threshold vector entries must be finite");
}

double smooth_threshold_action_prob(const ThresholdVector& theta, int l,
                                    double b1) {
  if (b1 < 0 || b1 > 1) throw std::invalid_argument("belief out of range");
  double sigma = theta.threshold(l);
  if (sigma <= 0.0 || b1 >= 1.0) return 1.0;
  if (b1 <= 0.0) return 0.0;
  double ratio = (b1 * (1 - sigma)) / (sigma * (1 - b1));
  return 1.0 / (1.0 + std::pow(ratio, -20.0));
}

StoppingPolicy make_smooth_policy(ThresholdVector theta) {
  return [theta = std::move(theta)](double b1, int l) {
    return smooth_threshold_action_prob(theta, l, b1);
  };
}

StoppingPolicy make_hard_policy(std::vector<double> alphas) {
  return [alphas = std::move(alphas)](double b1, int l) {
    return b1 >= alphas.at(static_cast<size_t>(l) - 1) ? 1.0 : 0.0;
  };
}

double StoppingTrajectory::total_reward() const {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

StoppingTrajectory simulate_stopping_episode(const MultiStopModel& model,
                                             const StoppingPolicy& policy,
                                             RngStream rng, int max_length) {
  model.validate();
  const int L = model.stops_total;
  const double p = model.intrusion_probability;
  StoppingTrajectory tr;
  int s = 0, l = L;
  double b1 = 0.0;
  for (int t = 0; t < max_length; ++t) {
    tr.states.push_back(s);
    tr.beliefs.push_back(b1);
    int a = rng.bernoulli(policy(b1, l)) ? 1 : 0;
    tr.actions.push_back(a);
    double reward = a == 0
                        ? model.reward_service + s * model.reward_intrusion / L
                        : s * model.reward_stop / L;
    tr.rewards.push_back(reward);
    if (a == 1 && l == 1) return tr;  // final stop, terminal reached
    if (a == 1) --l;
    if (s == 0 && rng.bernoulli(p)) s = 1;
    int o = rng.categorical(s == 0 ? model.obs_no_intrusion
                                   : model.obs_intrusion);
    tr.observations.push_back(o);
    double pred = b1 + (1 - b1) * p;
    double po = (1 - pred) * model.obs_no_intrusion[o] +
                pred * model.obs_intrusion[o];
    b1 = pred * model.obs_intrusion[o] / po;
  }
  tr.truncated = true;
  return tr;
}

double StoppingOracle::value(int l, double b1) const {
  return levels.at(static_cast<size_t>(l) - 1).value({1 - b1, b1});
}

double StoppingOracle::q_continue(int l, double b1) const {
  const int L = model.stops_total;
  double r = model.reward_service + b1 * model.reward_intrusion / L;
  return r + expected_next_value(model, levels[l - 1], b1);
}

double StoppingOracle::q_stop(int l, double b1) const {
  const int L = model.stops_total;
  double r = b1 * model.reward_stop / L;
  if (l == 1) return r;
  return r + expected_next_value(model, levels[l - 2], b1);
}

StoppingOracle solve_stopping_oracle(const MultiStopModel& model,
                                     int horizon) {
  model.validate();
  LevelSets sets = solve_levels(model, horizon);
  StoppingOracle oracle;
  oracle.model = model;
  for (const auto& env : sets.by_level)
    oracle.levels.push_back(to_alpha_set(env));
  return oracle;
}

OracleThresholds extract_oracle_thresholds(const StoppingOracle& oracle) {
  OracleThresholds out;
  const int L = oracle.model.stops_total;
  for (int l = 1; l <= L; ++l) {
    auto gap = [&](double b) {
      return oracle.q_stop(l, b) - oracle.q_continue(l, b);
    };
    // scan for a sign change, then bisect to 1e-4
    double lo = -1, hi = -1;
    double prev = gap(0.0);
    if (prev >= 0) {
      out.alpha.push_back(0.0);
      out.kind.push_back(ThresholdKind::AlwaysStop);
      continue;
    }
    for (int i = 1; i <= 1000; ++i) {
      double b = i / 1000.0;
      double g = gap(b);
      if (prev < 0 && g >= 0) {
        lo = (i - 1) / 1000.0;
        hi = b;
        break;
      }
      prev = g;
    }
    if (lo < 0) {
      out.alpha.push_back(1.0);
      out.kind.push_back(ThresholdKind::NeverStop);
      continue;
    }
    while (hi - lo > 1e-4) {
      double mid = 0.5 * (lo + hi);
      (gap(mid) < 0 ? lo : hi) = mid;
    }
    out.alpha.push_back(0.5 * (lo + hi));
    out.kind.push_back(ThresholdKind::Interior);
  }
  return out;
}

OracleThresholds extract_oracle_thresholds(const MultiStopModel& model,
                                           int horizon) {
  return extract_oracle_thresholds(solve_stopping_oracle(model, horizon));
}

double mean_stopping_return(const MultiStopModel& model,
                            const StoppingPolicy& policy, int episodes,
                            RngStream rng, int max_length) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    auto tr = simulate_stopping_episode(
        model, policy, rng.substream("episode", static_cast<uint64_t>(e)),
        max_length);
    total += tr.total_reward();
  }
  return episodes > 0 ? total / episodes : 0.0;
}

TSpsaResult t_spsa(const MultiStopModel& model, const SpsaConfig& cfg,
                   int episodes_per_eval, uint64_t seed, int max_length) {
  model.validate();
  TSpsaResult result;
  long truncated = 0;
  NoisyObjective objective = [&](const std::vector<double>& th,
                                 RngStream& rng) {
    ThresholdVector tv{th};
    StoppingPolicy pol = make_smooth_policy(tv);
    double total = 0.0;
    for (int e = 0; e < episodes_per_eval; ++e) {
      auto tr = simulate_stopping_episode(
          model, pol, rng.substream("episode", static_cast<uint64_t>(e)),
          max_length);
      if (tr.truncated) ++truncated;
      total += tr.total_reward();
    }
    return total / std::max(1, episodes_per_eval);
  };
  RngStream rng(seed);
  std::vector<std::vector<double>> trace;
  std::vector<double> theta0(model.stops_total, 0.0);
  auto theta = spsa_optimize(objective, theta0, cfg, rng.substream("spsa"),
                             &trace);
  RngStream curve_rng = rng.substream("curve");
  for (size_t n = 0; n < trace.size(); ++n) {
    RngStream eval = curve_rng.substream("iter", static_cast<uint64_t>(n));
    ThresholdVector tv{trace[n]};
    double ret = mean_stopping_return(model, make_smooth_policy(tv),
                                      episodes_per_eval, eval, max_length);
    std::vector<double> alphas;
    for (int l = 1; l <= model.stops_total; ++l)
      alphas.push_back(tv.threshold(l));
    result.curve.emplace_back(ret, alphas);
  }
  result.theta.theta = theta;
  result.truncated_episodes = truncated;
  return result;
}

}  // namespace resp
