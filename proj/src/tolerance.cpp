#include "resp/tolerance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "resp/lp.hpp"
#include "resp/stopping.hpp"  // beta_binomial_pmf

namespace resp {

RecoveryAttacker recovery_always_attack() {
  return [](int, double) { return 1.0; };
}

RecoveryAttacker recovery_never_attack() {
  return [](int, double) { return 0.0; };
}

void RecoveryGameParams::validate() const {
  if (p_attack < 0.0 || p_attack >= 1.0)
    throw std::invalid_argument("recovery: p_attack must lie in [0, 1)");
  if (p_crash <= 0.0 || p_crash >= 1.0)
    throw std::invalid_argument("recovery: p_crash must lie in (0, 1)");
  if (eta <= 1.0)
    throw std::invalid_argument(
        "recovery: eta must exceed 1 (one intrusion step outweighs one "
        "recovery)");
  if (btr < 0) throw std::invalid_argument("recovery: btr must be >= 0");
  auto check_row = [](const std::vector<double>& row) {
    if (row.empty()) throw std::invalid_argument("recovery: empty alert row");
    double total = 0.0;
    for (double v : row) {
      if (v < 0.0) throw std::invalid_argument("recovery: negative alert mass");
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw std::invalid_argument("recovery: alert row must sum to 1");
  };
  check_row(obs_false);
  check_row(obs_attack);
  if (obs_false.size() != obs_attack.size())
    throw std::invalid_argument("recovery: alert rows must share support");
}

RecoveryGameParams RecoveryGameParams::defaults(int obs_trials) {
  RecoveryGameParams p;
  p.obs_false = beta_binomial_pmf(obs_trials, 0.7, 3.0);
  p.obs_attack = beta_binomial_pmf(obs_trials, 1.0, 0.7);
  return p;
}

double recovery_cost(int s, int a, double eta) {
  return eta * s * (1 - a) + a;
}

FinitePomdp build_recovery_pomdp(const RecoveryGameParams& params,
                                 const std::array<double, 2>& attack_prob) {
  params.validate();
  for (double q : attack_prob)
    if (q < 0.0 || q > 1.0)
      throw std::invalid_argument("recovery: attack probability out of range");

  FinitePomdp pomdp;
  pomdp.base = FiniteMdp::zeros(2, 2, 1.0 - params.p_crash);
  pomdp.base.initial_distribution = {1.0, 0.0};
  // wait: a healthy node is compromised when an attack lands
  double q_h = attack_prob[0] * params.p_attack;
  pomdp.base.p(0, 0, 1) = q_h;
  pomdp.base.p(0, 0, 0) = 1.0 - q_h;
  pomdp.base.p(1, 0, 1) = 1.0;
  // recover: back to healthy from either state
  pomdp.base.p(0, 1, 0) = 1.0;
  pomdp.base.p(1, 1, 0) = 1.0;
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a)
      pomdp.base.r(s, a) = -recovery_cost(s, a, params.eta);

  pomdp.observation_count = static_cast<int>(params.obs_false.size());
  pomdp.observation.assign(static_cast<size_t>(2) * pomdp.observation_count,
                           0.0);
  for (int s = 0; s < 2; ++s) {
    double pa = attack_prob[static_cast<size_t>(s)];
    for (int o = 0; o < pomdp.observation_count; ++o)
      pomdp.z(o, s) = pa * params.obs_attack[static_cast<size_t>(o)] +
                      (1.0 - pa) * params.obs_false[static_cast<size_t>(o)];
  }
  pomdp.validate();
  return pomdp;
}

double recovery_belief_update(const RecoveryGameParams& params,
                              double belief_c, int a_ctrl, int obs,
                              const RecoveryAttacker& att) {
  if (obs < 0 || obs >= static_cast<int>(params.obs_false.size()))
    throw std::invalid_argument("recovery: observation out of range");
  // attack probabilities per current state under the conjectured attacker
  std::array<double, 2> p_attack_s = {att(0, belief_c), att(1, belief_c)};
  // the alert depends on the attacker's action, drawn in the current state
  double p_att_marg =
      belief_c * p_attack_s[1] + (1.0 - belief_c) * p_attack_s[0];
  double like = p_att_marg * params.obs_attack[static_cast<size_t>(obs)] +
                (1.0 - p_att_marg) * params.obs_false[static_cast<size_t>(obs)];
  if (like < 1e-300)
    throw RealizabilityError("recovery: unrealizable alert observation");
  // the alert is independent of s' given the attacker action; conditioning
  // on the attack indicator reweights the compromise prediction
  double p_att_given_o =
      p_att_marg * params.obs_attack[static_cast<size_t>(obs)] / like;
  // recompute the compromise prediction conditioned on the attack indicator
  double next_c;
  if (a_ctrl == 1) {
    next_c = 0.0;
  } else if (p_att_marg <= 0.0) {
    next_c = belief_c;  // no attack possible: the state persists
  } else if (p_att_marg >= 1.0) {
    next_c = belief_c + (1.0 - belief_c) * params.p_attack;
  } else {
    // posterior over the current state given the attack indicator
    double b_c_att = belief_c * p_attack_s[1] / p_att_marg;
    double b_c_noatt = belief_c * (1.0 - p_attack_s[1]) / (1.0 - p_att_marg);
    double c_att = b_c_att + (1.0 - b_c_att) * params.p_attack;
    double c_noatt = b_c_noatt;
    next_c = p_att_given_o * c_att + (1.0 - p_att_given_o) * c_noatt;
  }
  return std::min(1.0, std::max(0.0, next_c));
}

void RecoveryThresholds::validate() const {
  if (theta.empty())
    throw std::invalid_argument("recovery: at least one threshold required");
  for (double v : theta)
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument("recovery: thresholds must lie in [0, 1]");
}

bool RecoveryThresholds::recover(double belief_c, int tau, int btr) const {
  if (btr > 0 && tau >= btr) return true;  // deadline forces recovery
  size_t idx = btr > 0 ? static_cast<size_t>(std::min<int>(tau, btr - 1) - 1)
                       : 0;
  return belief_c >= theta.at(idx);
}

namespace {

template <typename StepCost>
void roll_recovery(const RecoveryGameParams& params,
                   const RecoveryThresholds& thr, const RecoveryAttacker& att,
                   RngStream& rng, int max_steps, bool explicit_crash,
                   StepCost&& on_step) {
  double b = 0.0;
  int s = 0;
  int tau = 1;
  for (int t = 0; t < max_steps; ++t) {
    int a = thr.recover(b, tau, params.btr) ? 1 : 0;
    if (!on_step(recovery_cost(s, a, params.eta))) return;
    if (explicit_crash && rng.uniform() < params.p_crash) return;
    // attacker acts in the current state; alert reflects that action
    int attack = rng.uniform() < att(s, b) ? 1 : 0;
    int s2;
    if (a == 1) {
      s2 = 0;
    } else if (s == 1) {
      s2 = 1;
    } else {
      s2 = (attack == 1 && rng.uniform() < params.p_attack) ? 1 : 0;
    }
    const std::vector<double>& row =
        attack == 1 ? params.obs_attack : params.obs_false;
    int obs = rng.categorical(row);
    b = recovery_belief_update(params, b, a, obs, att);
    tau = a == 1 ? 1 : tau + 1;
    s = s2;
  }
}

}  // namespace

double simulate_recovery_discounted(const RecoveryGameParams& params,
                                    const RecoveryThresholds& thr,
                                    const RecoveryAttacker& att, RngStream rng,
                                    int horizon) {
  double total = 0.0, disc = 1.0;
  double gamma = 1.0 - params.p_crash;
  roll_recovery(params, thr, att, rng, horizon, false, [&](double c) {
    total += disc * c;
    disc *= gamma;
    return true;
  });
  return total;
}

RecoveryEpisode simulate_recovery_until_crash(const RecoveryGameParams& params,
                                              const RecoveryThresholds& thr,
                                              const RecoveryAttacker& att,
                                              RngStream rng, int max_steps) {
  RecoveryEpisode ep;
  roll_recovery(params, thr, att, rng, max_steps, true, [&](double c) {
    ep.cost += c;
    ++ep.steps;
    return true;
  });
  return ep;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

RecoveryThresholds recovery_best_response(const RecoveryGameParams& params,
                                          const RecoveryAttacker& att,
                                          const RecoveryBrConfig& cfg,
                                          uint64_t seed) {
  params.validate();
  int d = params.btr_finite() ? params.btr - 1 : 1;
  if (d < 1) d = 1;
  RngStream rng(seed);

  NoisyObjective objective = [&](const std::vector<double>& x,
                                 RngStream& eval) {
    RecoveryThresholds thr;
    thr.theta.reserve(x.size());
    for (double v : x) thr.theta.push_back(sigmoid(v));
    double total = 0.0;
    for (int e = 0; e < cfg.episodes_per_eval; ++e)
      total += simulate_recovery_discounted(
          params, thr, att,
          eval.substream("episode", static_cast<uint64_t>(e)), cfg.horizon);
    return -total / std::max(1, cfg.episodes_per_eval);  // maximize -cost
  };
  std::vector<double> init(static_cast<size_t>(d), 0.0);
  std::vector<double> fitted =
      cfg.optimizer == RecoveryOptimizer::Spsa
          ? spsa_optimize(objective, std::move(init), cfg.spsa,
                          rng.substream("spsa"))
          : cem_optimize(objective, std::move(init), cfg.cem,
                         rng.substream("cem"));
  RecoveryThresholds thr;
  for (double v : fitted) thr.theta.push_back(sigmoid(v));
  thr.validate();
  return thr;
}

CostEstimate recovery_average_cost(const RecoveryGameParams& params,
                                   const RecoveryThresholds& thr,
                                   const RecoveryAttacker& att, int episodes,
                                   int max_steps, uint64_t seed) {
  RngStream rng(seed);
  double total = 0.0, total_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    RecoveryEpisode ep = simulate_recovery_until_crash(
        params, thr, att, rng.substream("episode", static_cast<uint64_t>(e)),
        max_steps);
    double c = ep.steps > 0 ? ep.cost / ep.steps : 0.0;
    total += c;
    total_sq += c * c;
  }
  CostEstimate est;
  est.episodes = episodes;
  est.mean = total / episodes;
  double var = std::max(0.0, total_sq / episodes - est.mean * est.mean);
  est.std_error = episodes > 1 ? std::sqrt(var / (episodes - 1)) : 0.0;
  return est;
}

// --- Global replication game ------------------------------------------------

void ReplicationCmdp::validate(bool require_unichain) const {
  if (max_nodes < 1)
    throw std::invalid_argument("replication: at least two states required");
  if (tolerance_f < 0 || tolerance_f >= max_nodes)
    throw std::invalid_argument("replication: invalid tolerance threshold");
  if (availability_floor <= 0.0 || availability_floor >= 1.0)
    throw std::invalid_argument("replication: availability floor in (0, 1)");
  int n = state_count();
  if (static_cast<int>(transition.size()) != n)
    throw std::invalid_argument("replication: one transition row per state");
  for (const auto& per_action : transition) {
    if (per_action.size() != 2)
      throw std::invalid_argument("replication: two actions per state");
    for (const auto& row : per_action) {
      if (static_cast<int>(row.size()) != n)
        throw std::invalid_argument("replication: ragged transition row");
      double total = 0.0;
      for (double v : row) {
        if (v < 0.0)
          throw std::invalid_argument("replication: negative probability");
        if (require_unichain && v <= 0.0)
          throw std::invalid_argument(
              "replication: unichain assumption needs strictly positive "
              "entries");
        total += v;
      }
      if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("replication: row must sum to 1");
    }
  }
}

std::vector<std::vector<std::vector<double>>> binomial_replication_transition(
    int max_nodes, double p_fail, double smoothing) {
  if (max_nodes < 1) throw std::invalid_argument("replication: max_nodes >= 1");
  if (p_fail < 0.0 || p_fail > 1.0)
    throw std::invalid_argument("replication: p_fail in [0, 1]");
  if (smoothing < 0.0 || smoothing >= 1.0)
    throw std::invalid_argument("replication: smoothing in [0, 1)");
  int n = max_nodes + 1;
  std::vector<std::vector<std::vector<double>>> t(
      static_cast<size_t>(n),
      std::vector<std::vector<double>>(2, std::vector<double>(
                                              static_cast<size_t>(n), 0.0)));
  for (int s = 0; s < n; ++s) {
    // binomial survival pmf of the s healthy nodes
    std::vector<double> pmf(static_cast<size_t>(s) + 1, 0.0);
    for (int k = 0; k <= s; ++k) {
      double log_c = std::lgamma(s + 1.0) - std::lgamma(k + 1.0) -
                     std::lgamma(s - k + 1.0);
      double lp = k * std::log1p(-p_fail);
      double lq = (s - k) * std::log(std::max(p_fail, 1e-300));
      if (p_fail == 0.0) {
        pmf[static_cast<size_t>(k)] = k == s ? 1.0 : 0.0;
      } else if (p_fail == 1.0) {
        pmf[static_cast<size_t>(k)] = k == 0 ? 1.0 : 0.0;
      } else {
        pmf[static_cast<size_t>(k)] = std::exp(log_c + lp + lq);
      }
    }
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k <= s; ++k) {
        int s2 = std::min(k + a, max_nodes);
        t[static_cast<size_t>(s)][static_cast<size_t>(a)]
         [static_cast<size_t>(s2)] += pmf[static_cast<size_t>(k)];
      }
  }
  if (smoothing > 0.0) {
    for (auto& per_action : t)
      for (auto& row : per_action)
        for (double& v : row)
          v = (1.0 - smoothing) * v + smoothing / n;
  }
  return t;
}

CmdpSolution cmdp_best_response_lp(const ReplicationCmdp& cmdp) {
  cmdp.validate();
  const int n = cmdp.state_count();
  LpBuilder lp;
  // variable rho(s, a) at index s * 2 + a; objective sum of a * rho(s, a)
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a) lp.add_var(static_cast<double>(a));

  // normalization
  {
    std::vector<std::pair<int, double>> terms;
    for (int v = 0; v < 2 * n; ++v) terms.push_back({v, 1.0});
    lp.add_constraint(terms, LpRel::Eq, 1.0);
  }
  // flow balance per successor state
  for (int s2 = 0; s2 < n; ++s2) {
    std::vector<std::pair<int, double>> terms;
    terms.push_back({s2 * 2 + 0, 1.0});
    terms.push_back({s2 * 2 + 1, 1.0});
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a) {
        double p = cmdp.transition[static_cast<size_t>(s)]
                                  [static_cast<size_t>(a)]
                                  [static_cast<size_t>(s2)];
        if (p != 0.0) terms.push_back({s * 2 + a, -p});
      }
    lp.add_constraint(terms, LpRel::Eq, 0.0);
  }
  // availability floor
  {
    std::vector<std::pair<int, double>> terms;
    for (int s = cmdp.tolerance_f + 1; s < n; ++s) {
      terms.push_back({s * 2 + 0, 1.0});
      terms.push_back({s * 2 + 1, 1.0});
    }
    lp.add_constraint(terms, LpRel::Ge, cmdp.availability_floor);
  }
  // forced addition below the tolerance threshold
  for (int s = 0; s <= cmdp.tolerance_f; ++s)
    lp.add_constraint({{s * 2 + 0, 1.0}}, LpRel::Eq, 0.0);

  LpResult res = lp.solve();
  if (res.status == LpStatus::Infeasible)
    throw CmdpInfeasible("replication: availability floor is unattainable");
  if (res.status != LpStatus::Optimal)
    throw std::runtime_error("replication: LP solve failed unexpectedly");

  CmdpSolution sol;
  sol.occupancy.rho = res.x;
  sol.occupancy.rho.resize(static_cast<size_t>(2 * n));
  sol.avg_cost = res.objective;
  sol.policy.resize(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    double mass = sol.occupancy.state_marginal(s);
    // zero-mass states default to adding a node (availability-safe)
    sol.policy[static_cast<size_t>(s)] =
        mass > 0.0 ? sol.occupancy.at(s, 1) / mass : 1.0;
    if (s <= cmdp.tolerance_f) sol.policy[static_cast<size_t>(s)] = 1.0;
  }

  // post-solve verification: any violation is a hard failure
  double total = 0.0, avail = 0.0;
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 2; ++a) {
      double v = sol.occupancy.at(s, a);
      if (v < -1e-6)
        throw std::runtime_error("replication: negative occupancy mass");
      total += v;
      if (s > cmdp.tolerance_f) avail += v;
    }
  if (std::fabs(total - 1.0) > 1e-6)
    throw std::runtime_error("replication: occupancy does not normalize");
  if (avail < cmdp.availability_floor - 1e-6)
    throw std::runtime_error("replication: availability constraint violated");
  for (int s2 = 0; s2 < n; ++s2) {
    double flow = sol.occupancy.state_marginal(s2);
    for (int s = 0; s < n; ++s)
      for (int a = 0; a < 2; ++a)
        flow -= sol.occupancy.at(s, a) *
                cmdp.transition[static_cast<size_t>(s)][static_cast<size_t>(a)]
                               [static_cast<size_t>(s2)];
    if (std::fabs(flow) > 1e-6)
      throw std::runtime_error("replication: flow balance violated");
  }
  return sol;
}

ThresholdMixture verify_threshold_mixture(const std::vector<double>& policy,
                                          int tolerance_f, double tol) {
  ThresholdMixture out;
  const int n = static_cast<int>(policy.size());
  auto is_one = [&](double v) { return std::fabs(v - 1.0) <= tol; };
  auto is_zero = [&](double v) { return std::fabs(v) <= tol; };

  int beta2 = -1;  // last state of the all-one prefix
  while (beta2 + 1 < n && is_one(policy[static_cast<size_t>(beta2 + 1)]))
    ++beta2;
  int beta1 = beta2;
  double kappa = 1.0;
  if (beta2 + 1 < n && !is_zero(policy[static_cast<size_t>(beta2 + 1)])) {
    kappa = policy[static_cast<size_t>(beta2 + 1)];
    beta1 = beta2 + 1;
    while (beta1 + 1 < n &&
           std::fabs(policy[static_cast<size_t>(beta1 + 1)] - kappa) <= tol)
      ++beta1;
  }
  for (int s = beta1 + 1; s < n; ++s)
    if (!is_zero(policy[static_cast<size_t>(s)])) out.violations.push_back(s);
  if (beta2 < tolerance_f && beta2 < n - 1) {
    // the forced-action region must be fully covered by the all-one prefix
    out.violations.push_back(beta2 + 1);
  }
  if (!out.violations.empty()) return out;
  out.ok = true;
  out.beta2 = std::max(beta2, 0);
  out.beta1 = std::max(beta1, 0);
  out.kappa = beta1 == beta2 ? 1.0 : kappa;
  return out;
}

// --- Reliability analytics ---------------------------------------------------

namespace {

void check_square(const std::vector<std::vector<double>>& p) {
  size_t n = p.size();
  if (n == 0) throw std::invalid_argument("reliability: empty chain");
  for (const auto& row : p) {
    if (row.size() != n)
      throw std::invalid_argument("reliability: chain must be square");
    double total = 0.0;
    for (double v : row) {
      if (v < 0.0) throw std::invalid_argument("reliability: negative entry");
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw std::invalid_argument("reliability: row must sum to 1");
  }
}

}  // namespace

double mttf(const std::vector<std::vector<double>>& transition, int f,
            int s1) {
  check_square(transition);
  const int n = static_cast<int>(transition.size());
  if (s1 < 0 || s1 >= n)
    throw std::invalid_argument("reliability: start state out of range");
  if (s1 <= f) return 0.0;
  // hitting-time system over the transient states s > f
  std::vector<int> idx(static_cast<size_t>(n), -1);
  int m = 0;
  for (int s = f + 1; s < n; ++s) idx[static_cast<size_t>(s)] = m++;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(m);
  for (int s = f + 1; s < n; ++s) {
    int i = idx[static_cast<size_t>(s)];
    a(i, i) += 1.0;
    for (int s2 = f + 1; s2 < n; ++s2)
      a(i, idx[static_cast<size_t>(s2)]) -=
          transition[static_cast<size_t>(s)][static_cast<size_t>(s2)];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible())
    throw std::invalid_argument(
        "reliability: failure set is not reached almost surely");
  Eigen::VectorXd x = lu.solve(b);
  return x(idx[static_cast<size_t>(s1)]);
}

double reliability(const std::vector<std::vector<double>>& transition, int f,
                   int s1, int t) {
  check_square(transition);
  const int n = static_cast<int>(transition.size());
  if (s1 < 0 || s1 >= n)
    throw std::invalid_argument("reliability: start state out of range");
  if (t < 0) throw std::invalid_argument("reliability: negative horizon");
  std::vector<double> d(static_cast<size_t>(n), 0.0);
  d[static_cast<size_t>(s1)] = 1.0;
  for (int step = 0; step < t; ++step) {
    std::vector<double> next(static_cast<size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) {
      if (d[static_cast<size_t>(s)] == 0.0) continue;
      for (int s2 = 0; s2 < n; ++s2)
        next[static_cast<size_t>(s2)] +=
            d[static_cast<size_t>(s)] *
            transition[static_cast<size_t>(s)][static_cast<size_t>(s2)];
    }
    d = next;
  }
  double out = 0.0;
  for (int s = f + 1; s < n; ++s) out += d[static_cast<size_t>(s)];
  return out;
}

}  // namespace resp
