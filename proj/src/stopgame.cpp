#include "resp/stopgame.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "resp/lp.hpp"

namespace resp {

namespace {

constexpr int kTerminal = 2;

double smooth_stop_prob(double sigma, double b1) {
  // shared smooth threshold form, exponent -20
  if (sigma <= 0.0 || b1 >= 1.0) return 1.0;
  if (b1 <= 0.0) return 0.0;
  double ratio = (b1 * (1 - sigma)) / (sigma * (1 - b1));
  return 1.0 / (1.0 + std::pow(ratio, -20.0));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void StoppingGame::validate() const {
  if (stops_total < 1)
    throw std::invalid_argument("stopgame: stops_total must be positive");
  if (static_cast<int>(stop_success.size()) != stops_total)
    throw std::invalid_argument("stopgame: need one phi per stop level");
  for (double v : stop_success)
    if (v <= 0.0 || v > 1.0)
      throw std::invalid_argument("stopgame: phi_l must lie in (0, 1]");
  if (reward_stop < 0 || cost_stop > 0 || cost_intrusion > 0)
    throw std::invalid_argument("stopgame: reward signs are fixed");
  if (discount < 0 || discount >= 1)
    throw std::invalid_argument("stopgame: discount must lie in [0, 1)");
  if (obs_no_intrusion.empty() ||
      obs_no_intrusion.size() != obs_intrusion.size())
    throw std::invalid_argument("stopgame: observation rows must match");
  for (const auto* row : {&obs_no_intrusion, &obs_intrusion}) {
    double total = 0.0;
    for (double v : *row) {
      if (v < 0) throw std::invalid_argument("stopgame: negative obs mass");
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw std::invalid_argument("stopgame: observation row must sum to 1");
  }
}

StoppingGame StoppingGame::benchmark(int stops_total) {
  StoppingGame g;
  g.stops_total = stops_total;
  g.stop_success.clear();
  for (int l = 1; l <= stops_total; ++l)
    g.stop_success.push_back(1.0 / (2.0 * l));
  g.obs_no_intrusion = beta_binomial_pmf(10, 0.7, 3.0);
  g.obs_intrusion = beta_binomial_pmf(10, 1.0, 0.7);
  return g;
}

StopGameTables build_stopping_game(const StoppingGame& game) {
  game.validate();
  const int L = game.stops_total;
  StopGameTables t;
  t.stops_total = L;
  t.transition.assign(static_cast<size_t>(L) * 3 * 2 * 2 * 3, 0.0);
  t.reward.assign(static_cast<size_t>(L) * 3 * 2 * 2, 0.0);
  for (int l = 1; l <= L; ++l) {
    double phi = game.phi(l);
    for (int ad = 0; ad < 2; ++ad) {
      bool final_stop = (ad == 1 && l == 1);
      for (int aa = 0; aa < 2; ++aa) {
        // terminal state is absorbing
        t.p(l, kTerminal, ad, aa, kTerminal) = 1.0;
        // s = 0: the attacker's stop starts the intrusion
        if (final_stop) {
          t.p(l, 0, ad, aa, kTerminal) = 1.0;
        } else if (aa == 1) {
          t.p(l, 0, ad, aa, 1) = 1.0;
        } else {
          t.p(l, 0, ad, aa, 0) = 1.0;
        }
        // s = 1: abort or final stop end the game; otherwise the intrusion
        // is stopped with probability phi_l
        if (final_stop || aa == 1) {
          t.p(l, 1, ad, aa, kTerminal) = 1.0;
        } else {
          t.p(l, 1, ad, aa, 1) = 1.0 - phi;
          t.p(l, 1, ad, aa, kTerminal) = phi;
        }
        // rewards
        if (aa == 1) {
          t.r(l, 1, ad, aa) = 0.0;
        } else if (ad == 1) {
          t.r(l, 1, ad, aa) = game.reward_stop / l;
        } else {
          t.r(l, 1, ad, aa) = game.cost_intrusion;
        }
        t.r(l, 0, ad, aa) = ad == 1 ? game.cost_stop / l : 0.0;
      }
    }
  }
  return t;
}

double AttackerThresholds::threshold(int i) const {
  return sigmoid(theta.at(static_cast<size_t>(i) - 1));
}

void AttackerThresholds::validate() const {
  for (double v : theta)
    if (!std::isfinite(v))
      throw std::invalid_argument("attacker thresholds must be finite");
}

DefenderStrategy defender_smooth_strategy(ThresholdVector theta) {
  return [theta = std::move(theta)](double b1, int l) {
    return smooth_threshold_action_prob(theta, l, b1);
  };
}

DefenderStrategy defender_hard_strategy(std::vector<double> alphas) {
  return [alphas = std::move(alphas)](double b1, int l) {
    return b1 >= alphas.at(static_cast<size_t>(l) - 1) ? 1.0 : 0.0;
  };
}

AttackerStrategy attacker_smooth_strategy(AttackerThresholds theta,
                                          int stops_total) {
  return [theta = std::move(theta), stops_total](double b1, int s, int l) {
    if (s == 0) {
      // probability of continuing (waiting) rises with the belief; stop
      // (= start the intrusion) is the complement
      return 1.0 - smooth_stop_prob(theta.threshold(l), b1);
    }
    return smooth_stop_prob(theta.threshold(stops_total + l), b1);
  };
}

AttackerStrategy attacker_hard_strategy(double beta0, double beta1) {
  return [beta0, beta1](double b1, int s, int) {
    if (s == 0) return b1 < beta0 ? 1.0 : 0.0;
    return b1 >= beta1 ? 1.0 : 0.0;
  };
}

AttackerStrategy attacker_never_attack() {
  return [](double, int, int) { return 0.0; };
}

AttackerStrategy attacker_always_attack() {
  return [](double, int s, int) { return s == 0 ? 1.0 : 0.0; };
}

DefenderStrategy defender_mixture_average(const DefenderMixture& mix) {
  if (mix.buffer.empty())
    throw std::invalid_argument("stopgame: empty defender mixture");
  return [mix](double b1, int l) {
    double total = 0.0;
    for (const auto& th : mix.buffer)
      total += smooth_threshold_action_prob(th, l, b1);
    return total / static_cast<double>(mix.buffer.size());
  };
}

AttackerStrategy attacker_mixture_average(const AttackerMixture& mix,
                                          int stops_total) {
  if (mix.buffer.empty())
    throw std::invalid_argument("stopgame: empty attacker mixture");
  return [mix, stops_total](double b1, int s, int l) {
    double total = 0.0;
    for (const auto& th : mix.buffer)
      total += attacker_smooth_strategy(th, stops_total)(b1, s, l);
    return total / static_cast<double>(mix.buffer.size());
  };
}

double game_belief_update(const StoppingGame& game, double b1, int l,
                          int a_def, int obs, const AttackerStrategy& conj) {
  StopGameTables t = build_stopping_game(game);
  double prior[2] = {1 - b1, b1};
  double pred[2] = {0.0, 0.0};
  for (int s = 0; s < 2; ++s) {
    double p_stop = conj(b1, s, l);
    for (int aa = 0; aa < 2; ++aa) {
      double pa = aa == 1 ? p_stop : 1 - p_stop;
      for (int s2 = 0; s2 < 2; ++s2)
        pred[s2] += prior[s] * pa * t.p(l, s, a_def, aa, s2);
    }
  }
  double num0 = game.obs_no_intrusion[obs] * pred[0];
  double num1 = game.obs_intrusion[obs] * pred[1];
  double norm = num0 + num1;
  if (norm < 1e-12)
    throw RealizabilityError(
        "stopgame: observation has zero predictive probability");
  return num1 / norm;
}

GameEpisode simulate_game_episode(const StoppingGame& game,
                                  const DefenderStrategy& def,
                                  const AttackerStrategy& att_act,
                                  const AttackerStrategy& att_conj,
                                  RngStream rng, int max_length) {
  StopGameTables t = build_stopping_game(game);
  GameEpisode ep;
  int s = 0, l = game.stops_total;
  double b1 = 0.0;
  double disc = 1.0;
  for (int step = 0; step < max_length; ++step) {
    int ad = rng.bernoulli(def(b1, l)) ? 1 : 0;
    int aa = rng.bernoulli(att_act(b1, s, l)) ? 1 : 0;
    ep.return_defender += disc * t.r(l, s, ad, aa);
    disc *= game.discount;
    ++ep.length;
    // sample the successor
    double u = rng.uniform();
    int s2 = kTerminal;
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      acc += t.p(l, s, ad, aa, c);
      if (u < acc) {
        s2 = c;
        break;
      }
    }
    if (s2 == kTerminal) return ep;
    int o = rng.categorical(s2 == 0 ? game.obs_no_intrusion
                                    : game.obs_intrusion);
    // belief update with the conjectured attacker strategy
    double prior[2] = {1 - b1, b1};
    double pred[2] = {0.0, 0.0};
    for (int ps = 0; ps < 2; ++ps) {
      double p_stop = att_conj(b1, ps, l);
      for (int paa = 0; paa < 2; ++paa) {
        double pa = paa == 1 ? p_stop : 1 - p_stop;
        for (int ns = 0; ns < 2; ++ns)
          pred[ns] += prior[ps] * pa * t.p(l, ps, ad, paa, ns);
      }
    }
    double num0 = game.obs_no_intrusion[o] * pred[0];
    double num1 = game.obs_intrusion[o] * pred[1];
    double norm = num0 + num1;
    // conditioning on survival; a conjecture can give the realized
    // observation zero mass, in which case the belief is left unchanged
    if (norm > 1e-12) b1 = num1 / norm;
    if (ad == 1) --l;
    s = s2;
  }
  ep.capped = true;
  return ep;
}

ValueEstimate estimate_defender_value(
    const StoppingGame& game,
    const std::function<DefenderStrategy(RngStream&)>& def_sampler,
    const std::function<AttackerStrategy(RngStream&)>& att_sampler,
    const AttackerStrategy& att_conj, int episodes, RngStream rng,
    int max_length) {
  double total = 0.0, total_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    RngStream ep_rng = rng.substream("episode", static_cast<uint64_t>(e));
    RngStream pick = ep_rng.substream("pick");
    DefenderStrategy def = def_sampler(pick);
    AttackerStrategy att = att_sampler(pick);
    auto ep = simulate_game_episode(game, def, att, att_conj,
                                    ep_rng.substream("sim"), max_length);
    total += ep.return_defender;
    total_sq += ep.return_defender * ep.return_defender;
  }
  ValueEstimate v;
  v.episodes = episodes;
  if (episodes > 0) {
    v.mean = total / episodes;
    double var = std::max(0.0, total_sq / episodes - v.mean * v.mean);
    if (episodes > 1)
      v.std_error = std::sqrt(var / (episodes - 1));
  }
  return v;
}

ValueEstimate estimate_defender_value(const StoppingGame& game,
                                      const DefenderStrategy& def,
                                      const AttackerStrategy& att,
                                      int episodes, RngStream rng,
                                      int max_length) {
  return estimate_defender_value(
      game, [&](RngStream&) { return def; }, [&](RngStream&) { return att; },
      att, episodes, rng, max_length);
}

namespace {

std::vector<double> fresh_theta(int n, RngStream& rng) {
  // fresh starts are drawn uniformly from the hypercube corners {-1, 1}^n
  std::vector<double> th(n);
  for (int i = 0; i < n; ++i) th[i] = static_cast<double>(rng.rademacher());
  return th;
}

// Multi-start ascent: run SPSA from theta0 (restart 0) and from fresh
// corners, score each final candidate on a shared evaluation stream, keep
// the best. A pinned theta0 with restarts <= 1 reduces to a single run.
std::vector<double> multistart_spsa(const NoisyObjective& objective,
                                    std::vector<double> theta0, int dim,
                                    const BestResponseBudget& budget,
                                    RngStream rng) {
  bool pinned = !theta0.empty();
  int runs = pinned ? 1 : std::max(1, budget.restarts);
  std::vector<double> best;
  double best_score = 0.0;
  for (int r = 0; r < runs; ++r) {
    RngStream run = rng.substream("restart", static_cast<uint64_t>(r));
    std::vector<double> init =
        pinned ? theta0 : fresh_theta(dim, run);
    std::vector<double> cand = spsa_optimize(objective, std::move(init),
                                             budget.spsa,
                                             run.substream("spsa"));
    RngStream eval = rng.substream("select");
    double score = objective(cand, eval);
    if (r == 0 || score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  return best;
}

}  // namespace

ThresholdVector best_response_defender(const StoppingGame& game,
                                       const AttackerStrategy& att,
                                       const BestResponseBudget& budget,
                                       RngStream rng,
                                       std::vector<double> theta0) {
  NoisyObjective objective = [&](const std::vector<double>& th,
                                 RngStream& eval) {
    DefenderStrategy def = defender_smooth_strategy(ThresholdVector{th});
    double total = 0.0;
    for (int e = 0; e < budget.episodes_per_eval; ++e) {
      total += simulate_game_episode(
                   game, def, att, att,
                   eval.substream("episode", static_cast<uint64_t>(e)),
                   budget.max_length)
                   .return_defender;
    }
    return total / std::max(1, budget.episodes_per_eval);
  };
  return ThresholdVector{multistart_spsa(objective, std::move(theta0),
                                         game.stops_total, budget, rng)};
}

AttackerThresholds best_response_attacker(const StoppingGame& game,
                                          const DefenderStrategy& def,
                                          const AttackerStrategy& att_conj,
                                          const BestResponseBudget& budget,
                                          RngStream rng,
                                          std::vector<double> theta0) {
  const int L = game.stops_total;
  NoisyObjective objective = [&](const std::vector<double>& th,
                                 RngStream& eval) {
    AttackerStrategy att =
        attacker_smooth_strategy(AttackerThresholds{th}, L);
    double total = 0.0;
    for (int e = 0; e < budget.episodes_per_eval; ++e) {
      total += simulate_game_episode(
                   game, def, att, att_conj,
                   eval.substream("episode", static_cast<uint64_t>(e)),
                   budget.max_length)
                   .return_defender;
    }
    // the attacker minimizes the defender's value
    return -total / std::max(1, budget.episodes_per_eval);
  };
  return AttackerThresholds{multistart_spsa(objective, std::move(theta0),
                                            2 * L, budget, rng)};
}

ExploitabilityResult exploitability(
    const StoppingGame& game,
    const std::function<DefenderStrategy(RngStream&)>& def_sampler,
    const DefenderStrategy& def_avg,
    const std::function<AttackerStrategy(RngStream&)>& att_sampler,
    const AttackerStrategy& att_avg, const BestResponseBudget& budget,
    int eval_episodes, RngStream rng) {
  const int L = game.stops_total;
  ExploitabilityResult res;
  res.defender_br = best_response_defender(game, att_avg, budget,
                                           rng.substream("def-br"));
  res.attacker_br = best_response_attacker(game, def_avg, att_avg, budget,
                                           rng.substream("att-br"));

  DefenderStrategy def_br = defender_smooth_strategy(res.defender_br);
  AttackerStrategy att_br = attacker_smooth_strategy(res.attacker_br, L);

  // the belief conjecture is the attacker average in both terms: the
  // defender's filter tracks its conjectured opponent, never a deviation
  ValueEstimate v1 = estimate_defender_value(
      game, [&](RngStream&) { return def_br; }, att_sampler, att_avg,
      eval_episodes, rng.substream("eval-def"), budget.max_length);
  ValueEstimate v2 = estimate_defender_value(
      game, def_sampler, [&](RngStream&) { return att_br; }, att_avg,
      eval_episodes, rng.substream("eval-att"), budget.max_length);

  res.value_defender_br = v1.mean;
  res.value_attacker_br = v2.mean;
  res.delta = v1.mean - v2.mean;
  res.std_error =
      std::sqrt(v1.std_error * v1.std_error + v2.std_error * v2.std_error);
  return res;
}

ExploitabilityResult exploitability(const StoppingGame& game,
                                    const DefenderMixture& def,
                                    const AttackerMixture& att,
                                    const BestResponseBudget& budget,
                                    int eval_episodes, RngStream rng) {
  const int L = game.stops_total;
  auto att_pick = [&](RngStream& pick) -> AttackerStrategy {
    const auto& th =
        att.buffer[static_cast<size_t>(pick.uniform_int(
            static_cast<int>(att.buffer.size())))];
    return attacker_smooth_strategy(th, L);
  };
  auto def_pick = [&](RngStream& pick) -> DefenderStrategy {
    const auto& th =
        def.buffer[static_cast<size_t>(pick.uniform_int(
            static_cast<int>(def.buffer.size())))];
    return defender_smooth_strategy(th);
  };
  return exploitability(game, def_pick, defender_mixture_average(def),
                        att_pick, attacker_mixture_average(att, L), budget,
                        eval_episodes, rng);
}

TfpResult t_fp(const StoppingGame& game, const TfpConfig& cfg, uint64_t seed) {
  game.validate();
  if (cfg.target_delta <= 0)
    throw std::invalid_argument("t_fp: target exploitability must be > 0");
  const int L = game.stops_total;
  RngStream rng(seed);
  TfpResult res;
  RngStream init = rng.substream("init");
  res.defender.buffer.push_back(ThresholdVector{fresh_theta(L, init)});
  res.attacker.buffer.push_back(AttackerThresholds{fresh_theta(2 * L, init)});

  for (int k = 1; k <= cfg.max_iterations; ++k) {
    RngStream it = rng.substream("iteration", static_cast<uint64_t>(k));
    AttackerStrategy att_avg = attacker_mixture_average(res.attacker, L);
    DefenderStrategy def_avg = defender_mixture_average(res.defender);
    ThresholdVector def_br =
        best_response_defender(game, att_avg, cfg.budget,
                               it.substream("def"));
    AttackerThresholds att_br =
        best_response_attacker(game, def_avg, att_avg, cfg.budget,
                               it.substream("att"));
    res.defender.buffer.push_back(def_br);
    res.attacker.buffer.push_back(att_br);

    ExploitabilityResult ex =
        exploitability(game, res.defender, res.attacker, cfg.budget,
                       cfg.eval_episodes, it.substream("exploit"));
    TfpTraceRow row;
    row.iteration = k;
    row.delta = ex.delta;
    row.std_error = ex.std_error;
    row.value_defender_br = ex.value_defender_br;
    row.value_attacker_br = ex.value_attacker_br;
    res.trace.push_back(row);
    res.final_delta = ex.delta;
    if (ex.delta < cfg.target_delta) {
      res.converged = true;
      break;
    }
  }
  return res;
}

GridEquilibrium grid_equilibrium_single_stop(const StoppingGame& game,
                                             int grid_points, int episodes,
                                             uint64_t seed, int max_length) {
  game.validate();
  if (game.stops_total != 1)
    throw std::invalid_argument("grid oracle: single-stop games only");
  GridEquilibrium eq;
  for (int i = 0; i < grid_points; ++i)
    eq.grid.push_back(static_cast<double>(i) / (grid_points - 1));
  const int n_def = grid_points;
  const int n_att = grid_points * grid_points;
  eq.payoff.assign(n_def, std::vector<double>(n_att, 0.0));

  RngStream rng(seed);
  for (int i = 0; i < n_def; ++i) {
    DefenderStrategy def = defender_hard_strategy({eq.grid[i]});
    for (int j = 0; j < n_att; ++j) {
      double beta0 = eq.grid[j / grid_points];
      double beta1 = eq.grid[j % grid_points];
      AttackerStrategy att = attacker_hard_strategy(beta0, beta1);
      double total = 0.0;
      for (int e = 0; e < episodes; ++e) {
        // common episode streams across all strategy pairs
        total += simulate_game_episode(
                     game, def, att, att,
                     rng.substream("episode", static_cast<uint64_t>(e)),
                     max_length)
                     .return_defender;
      }
      eq.payoff[i][j] = total / episodes;
    }
  }

  // defender side: maximize the game value
  {
    LpBuilder lp;
    int v = lp.add_var(-1.0, true);
    std::vector<int> x(n_def);
    for (int i = 0; i < n_def; ++i) x[i] = lp.add_var(0.0);
    for (int j = 0; j < n_att; ++j) {
      std::vector<std::pair<int, double>> terms = {{v, -1.0}};
      for (int i = 0; i < n_def; ++i) terms.push_back({x[i], eq.payoff[i][j]});
      lp.add_constraint(terms, LpRel::Ge, 0.0);
    }
    std::vector<std::pair<int, double>> simplex;
    for (int i = 0; i < n_def; ++i) simplex.push_back({x[i], 1.0});
    lp.add_constraint(simplex, LpRel::Eq, 1.0);
    LpResult sol = lp.solve();
    if (sol.status != LpStatus::Optimal)
      throw std::runtime_error("grid oracle: defender LP failed");
    eq.value = -sol.objective;
    for (int i = 0; i < n_def; ++i)
      eq.defender_mix.push_back(sol.x[static_cast<size_t>(x[i])]);
  }
  // attacker side: minimize the defender's best reply payoff
  {
    LpBuilder lp;
    int w = lp.add_var(1.0, true);
    std::vector<int> y(n_att);
    for (int j = 0; j < n_att; ++j) y[j] = lp.add_var(0.0);
    for (int i = 0; i < n_def; ++i) {
      std::vector<std::pair<int, double>> terms = {{w, -1.0}};
      for (int j = 0; j < n_att; ++j) terms.push_back({y[j], eq.payoff[i][j]});
      lp.add_constraint(terms, LpRel::Le, 0.0);
    }
    std::vector<std::pair<int, double>> simplex;
    for (int j = 0; j < n_att; ++j) simplex.push_back({y[j], 1.0});
    lp.add_constraint(simplex, LpRel::Eq, 1.0);
    LpResult sol = lp.solve();
    if (sol.status != LpStatus::Optimal)
      throw std::runtime_error("grid oracle: attacker LP failed");
    for (int j = 0; j < n_att; ++j)
      eq.attacker_mix.push_back(sol.x[static_cast<size_t>(y[j])]);
  }
  return eq;
}

}  // namespace resp
