#include "resp/conjectural.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace resp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double compromised_mass(const std::vector<double>& b) {
  double m = 0.0;
  for (size_t s = 1; s < b.size(); ++s) m += b[s];
  return m;
}

void check_obs_rows(const std::vector<std::vector<double>>& rows,
                    int state_count) {
  if (static_cast<int>(rows.size()) != state_count) {
    throw std::invalid_argument("observation family: wrong row count");
  }
  size_t obs = rows.empty() ? 0 : rows[0].size();
  for (const auto& row : rows) {
    if (row.size() != obs || row.empty()) {
      throw std::invalid_argument("observation family: ragged rows");
    }
    double total = 0.0;
    for (double v : row) {
      if (v < 0.0) {
        throw std::invalid_argument("observation family: negative entry");
      }
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("observation family: row does not sum to 1");
    }
  }
}

}  // namespace

void AptGame::validate() const {
  if (server_count < 1) throw std::invalid_argument("server_count must be >= 1");
  if (!(p_attack > 0.0 && p_attack <= 1.0)) {
    throw std::invalid_argument("p_attack must be in (0, 1]");
  }
  if (!(cost_p >= 1.0)) throw std::invalid_argument("cost_p must be >= 1");
  if (!(cost_q > 0.0)) throw std::invalid_argument("cost_q must be > 0");
  if (!(cost_r > 0.0)) throw std::invalid_argument("cost_r must be > 0");
  if (!(cost_q - cost_r < 1.0)) {
    throw std::invalid_argument("cost parameters must satisfy q - r < 1");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discount must be in [0, 1)");
  }
  if (!obs_family) throw std::invalid_argument("obs_family must be set");
}

AptGame AptGame::example(int server_count, double healthy_alert) {
  AptGame g;
  g.server_count = server_count;
  int n = server_count;
  g.obs_family = [n, healthy_alert](double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) {
      throw std::invalid_argument("alert probability must be in [0, 1]");
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<size_t>(n) + 1);
    for (int s = 0; s <= n; ++s) {
      double pa = s == 0 ? healthy_alert : theta;
      rows.push_back({1.0 - pa, pa});
    }
    return rows;
  };
  return g;
}

double apt_cost(const AptGame& game, int s, int a_def) {
  if (s < 0 || s > game.server_count) throw std::invalid_argument("apt_cost: bad state");
  if (a_def != 0 && a_def != 1) throw std::invalid_argument("apt_cost: bad action");
  if (a_def == 1) return game.cost_q - game.cost_r * (s > 0 ? 1.0 : 0.0);
  return std::pow(static_cast<double>(s), game.cost_p);
}

std::vector<double> apt_transition(const AptGame& game, int s, int a_def,
                                   int a_att) {
  int n = game.server_count;
  if (s < 0 || s > n) throw std::invalid_argument("apt_transition: bad state");
  std::vector<double> row(static_cast<size_t>(n) + 1, 0.0);
  if (a_def == 1) {
    row[0] = 1.0;
  } else if (a_att == 0) {
    row[static_cast<size_t>(s)] = 1.0;
  } else if (s == n) {
    row[static_cast<size_t>(n)] = 1.0;
  } else {
    row[static_cast<size_t>(s)] = 1.0 - game.p_attack;
    row[static_cast<size_t>(s) + 1] = game.p_attack;
  }
  return row;
}

AptTables build_apt_game(const AptGame& game, double theta) {
  game.validate();
  AptTables t;
  int n = game.server_count;
  t.state_count = n + 1;
  t.obs = game.obs_family(theta);
  check_obs_rows(t.obs, t.state_count);
  t.obs_count = static_cast<int>(t.obs[0].size());
  t.transition.assign(static_cast<size_t>(t.state_count) * 4 * t.state_count,
                      0.0);
  t.cost.assign(static_cast<size_t>(t.state_count), std::vector<double>(2));
  for (int s = 0; s <= n; ++s) {
    for (int ad = 0; ad < 2; ++ad) {
      t.cost[static_cast<size_t>(s)][static_cast<size_t>(ad)] =
          apt_cost(game, s, ad);
      for (int aa = 0; aa < 2; ++aa) {
        std::vector<double> row = apt_transition(game, s, ad, aa);
        for (int s2 = 0; s2 <= n; ++s2) {
          t.transition[static_cast<size_t>(((s * 2 + ad) * 2 + aa) *
                                           t.state_count + s2)] = row[static_cast<size_t>(s2)];
        }
      }
    }
  }
  return t;
}

FinitePomdp build_apt_defender_pomdp(const AptGame& game, double theta,
                                     const std::vector<double>& attack_prob) {
  game.validate();
  int n = game.server_count;
  if (static_cast<int>(attack_prob.size()) != n + 1) {
    throw std::invalid_argument("attack_prob must have one entry per state");
  }
  FinitePomdp pomdp;
  pomdp.base = FiniteMdp::zeros(n + 1, 2, game.discount);
  for (int s = 0; s <= n; ++s) {
    double pa = attack_prob[static_cast<size_t>(s)];
    if (pa < 0.0 || pa > 1.0) {
      throw std::invalid_argument("attack_prob entries must be in [0, 1]");
    }
    for (int ad = 0; ad < 2; ++ad) {
      pomdp.base.r(s, ad) = -apt_cost(game, s, ad);
      std::vector<double> cont = apt_transition(game, s, ad, 0);
      std::vector<double> stop = apt_transition(game, s, ad, 1);
      for (int s2 = 0; s2 <= n; ++s2) {
        pomdp.base.p(s, ad, s2) = (1.0 - pa) * cont[static_cast<size_t>(s2)] +
                                  pa * stop[static_cast<size_t>(s2)];
      }
    }
  }
  pomdp.base.initial_distribution.assign(static_cast<size_t>(n) + 1, 0.0);
  pomdp.base.initial_distribution[0] = 1.0;
  auto rows = game.obs_family(theta);
  check_obs_rows(rows, n + 1);
  pomdp.observation_count = static_cast<int>(rows[0].size());
  pomdp.observation.assign(static_cast<size_t>(n + 1) * pomdp.observation_count,
                           0.0);
  for (int s = 0; s <= n; ++s) {
    for (int o = 0; o < pomdp.observation_count; ++o) {
      pomdp.z(o, s) = rows[static_cast<size_t>(s)][static_cast<size_t>(o)];
    }
  }
  pomdp.validate();
  return pomdp;
}

AptDefenderStrategy threshold_defender(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must be in [0, 1]");
  }
  return [alpha](const std::vector<double>& b) {
    return compromised_mass(b) >= alpha ? 1.0 : 0.0;
  };
}

AptAttackerStrategy mixed_attacker(double stop_prob) {
  if (!(stop_prob >= 0.0 && stop_prob <= 1.0)) {
    throw std::invalid_argument("stop_prob must be in [0, 1]");
  }
  return [stop_prob](const std::vector<double>&, int) { return stop_prob; };
}

AptAttackerStrategy threshold_attacker(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("beta must be in [0, 1]");
  }
  return [beta](const std::vector<double>& b, int s) {
    return (s == 0 && compromised_mass(b) <= beta) ? 1.0 : 0.0;
  };
}

namespace {

// One-step state prediction under a conjectured attacker strategy.
std::vector<double> predict_state(const AptGame& game,
                                  const std::vector<double>& b, int a_def,
                                  const AptAttackerStrategy& att) {
  int n = game.server_count;
  std::vector<double> pred(static_cast<size_t>(n) + 1, 0.0);
  for (int s = 0; s <= n; ++s) {
    double mass = b[static_cast<size_t>(s)];
    if (mass <= 0.0) continue;
    double pa = att(b, s);
    for (int aa = 0; aa < 2; ++aa) {
      double w = mass * (aa == 1 ? pa : 1.0 - pa);
      if (w <= 0.0) continue;
      std::vector<double> row = apt_transition(game, s, a_def, aa);
      for (int s2 = 0; s2 <= n; ++s2) {
        pred[static_cast<size_t>(s2)] += w * row[static_cast<size_t>(s2)];
      }
    }
  }
  return pred;
}

}  // namespace

std::vector<double> apt_belief_update(const AptGame& game, double theta,
                                      const std::vector<double>& b, int a_def,
                                      int obs, const AptAttackerStrategy& att) {
  int n = game.server_count;
  if (static_cast<int>(b.size()) != n + 1) {
    throw std::invalid_argument("belief has wrong dimension");
  }
  auto rows = game.obs_family(theta);
  check_obs_rows(rows, n + 1);
  if (obs < 0 || obs >= static_cast<int>(rows[0].size())) {
    throw std::invalid_argument("observation out of range");
  }
  std::vector<double> pred = predict_state(game, b, a_def, att);
  std::vector<double> post(static_cast<size_t>(n) + 1, 0.0);
  double mass = 0.0;
  for (int s2 = 0; s2 <= n; ++s2) {
    post[static_cast<size_t>(s2)] =
        pred[static_cast<size_t>(s2)] *
        rows[static_cast<size_t>(s2)][static_cast<size_t>(obs)];
    mass += post[static_cast<size_t>(s2)];
  }
  if (mass <= 1e-300) {
    throw RealizabilityError(
        "belief update: observation has zero predictive probability");
  }
  for (double& v : post) v /= mass;
  return post;
}

// --- Conjecture adaptation ----------------------------------------------------

void ConjecturePosterior::validate() const {
  if (support.empty()) throw std::invalid_argument("posterior: empty support");
  if (support.size() != weights.size()) {
    throw std::invalid_argument("posterior: support/weights size mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("posterior: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("posterior: weights do not sum to 1");
  }
}

double ConjecturePosterior::mean() const {
  double m = 0.0;
  for (size_t i = 0; i < support.size(); ++i) m += support[i] * weights[i];
  return m;
}

int ConjecturePosterior::mode() const {
  int best = 0;
  for (size_t i = 1; i < weights.size(); ++i) {
    if (weights[i] > weights[static_cast<size_t>(best)] + 1e-15) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

ConjecturePosterior ConjecturePosterior::uniform(std::vector<double> support) {
  if (support.empty()) throw std::invalid_argument("uniform: empty support");
  ConjecturePosterior p;
  p.weights.assign(support.size(), 1.0 / static_cast<double>(support.size()));
  p.support = std::move(support);
  return p;
}

ConjecturePosterior bayes_conjecture_update(
    const ConjecturePosterior& prior, const std::vector<double>& likelihood) {
  prior.validate();
  if (likelihood.size() != prior.support.size()) {
    throw std::invalid_argument("likelihood has wrong dimension");
  }
  ConjecturePosterior post = prior;
  double total = 0.0;
  for (size_t i = 0; i < likelihood.size(); ++i) {
    if (likelihood[i] < 0.0) {
      throw std::invalid_argument("likelihood entries must be nonnegative");
    }
    post.weights[i] = prior.weights[i] * likelihood[i];
    total += post.weights[i];
  }
  if (total <= 0.0) {
    throw ConjectureUpdateError(
        "bayes update: the feedback has zero likelihood under every "
        "conjecture in the support");
  }
  for (double& w : post.weights) w /= total;
  return post;
}

namespace {

std::vector<double> feedback_distribution(
    const std::vector<std::vector<double>>& rows,
    const std::vector<double>& b) {
  size_t obs = rows[0].size();
  std::vector<double> d(obs, 0.0);
  for (size_t s = 0; s < rows.size(); ++s) {
    for (size_t o = 0; o < obs; ++o) d[o] += b[s] * rows[s][o];
  }
  return d;
}

double kl_divergence(const std::vector<double>& pt,
                     const std::vector<double>& pc) {
  double k = 0.0;
  for (size_t o = 0; o < pt.size(); ++o) {
    if (pt[o] <= 0.0) continue;  // 0 ln 0 = 0
    if (pc[o] <= 0.0) return kInf;
    k += pt[o] * std::log(pt[o] / pc[o]);
  }
  return k;
}

}  // namespace

double discrepancy(const AptGame& game, double true_theta,
                   double conjectured_theta, const BeliefOccupancy& occupancy) {
  game.validate();
  auto rows_t = game.obs_family(true_theta);
  auto rows_c = game.obs_family(conjectured_theta);
  check_obs_rows(rows_t, game.server_count + 1);
  check_obs_rows(rows_c, game.server_count + 1);
  if (rows_t[0].size() != rows_c[0].size()) {
    throw std::invalid_argument("observation alphabets differ");
  }
  double k = 0.0;
  for (const auto& [belief, weight] : occupancy.points) {
    if (weight < 0.0) throw std::invalid_argument("negative occupancy weight");
    if (weight == 0.0) continue;
    if (static_cast<int>(belief.size()) != game.server_count + 1) {
      throw std::invalid_argument("occupancy belief has wrong dimension");
    }
    double pointwise = kl_divergence(feedback_distribution(rows_t, belief),
                                     feedback_distribution(rows_c, belief));
    if (pointwise == kInf) return kInf;
    k += weight * pointwise;
  }
  return k;
}

// --- Rollout -----------------------------------------------------------------

namespace {

uint64_t hash_call_site(const std::vector<double>& b, int s) {
  char buf[64];
  std::string key;
  key.reserve(b.size() * 20 + 8);
  for (double v : b) {
    std::snprintf(buf, sizeof(buf), "%.12g,", v);
    key += buf;
  }
  std::snprintf(buf, sizeof(buf), "s=%d", s);
  key += buf;
  return fnv1a64(key);
}

// Filter variant over precomputed observation rows; falls back to the bare
// prediction when the sampled observation hits the numerical floor.
void filter_with_rows(const AptGame& game,
                      const std::vector<std::vector<double>>& rows,
                      std::vector<double>& b, int a_def, int o,
                      const AptAttackerStrategy& att) {
  std::vector<double> pred = predict_state(game, b, a_def, att);
  double mass = 0.0;
  for (size_t s2 = 0; s2 < pred.size(); ++s2) {
    pred[s2] *= rows[s2][static_cast<size_t>(o)];
    mass += pred[s2];
  }
  if (mass <= 1e-300) {
    pred = predict_state(game, b, a_def, att);
    mass = std::accumulate(pred.begin(), pred.end(), 0.0);
  }
  for (double& v : pred) v /= mass;
  b = std::move(pred);
}

// One simulated transition on the conjectured model. Returns the stage cost
// in the defender's sign and advances (s, b).
double sim_step(const AptGame& game, const std::vector<std::vector<double>>& obs,
                int a_def, int a_att, int& s, std::vector<double>& b,
                const AptAttackerStrategy& filter_att, RngStream& rng) {
  double cost = apt_cost(game, s, a_def);
  std::vector<double> row = apt_transition(game, s, a_def, a_att);
  s = rng.categorical(row);
  int o = rng.categorical(obs[static_cast<size_t>(s)]);
  filter_with_rows(game, obs, b, a_def, o, filter_att);
  return cost;
}

}  // namespace

CostToGo base_pair_cost_to_go(const AptGame& game, double theta,
                              ColPlayer player, const AptDefenderStrategy& def,
                              const AptAttackerStrategy& att,
                              const RolloutConfig& cfg, uint64_t seed) {
  game.validate();
  if (cfg.mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  if (cfg.truncation_depth < 0) {
    throw std::invalid_argument("truncation_depth must be >= 0");
  }
  auto obs = game.obs_family(theta);
  check_obs_rows(obs, game.server_count + 1);
  return [=](const std::vector<double>& b0, int s0) {
    RngStream base = RngStream(seed).substream("cost-to-go")
                         .substream(hash_call_site(b0, s0));
    double total = 0.0;
    for (int e = 0; e < cfg.mc_samples; ++e) {
      RngStream rng = base.substream("episode", static_cast<uint64_t>(e));
      std::vector<double> b = b0;
      int s = (player == ColPlayer::Defender || s0 < 0)
                  ? rng.categorical(b)
                  : s0;
      if (player == ColPlayer::Attacker && s0 >= 0) s = s0;
      double acc = 0.0;
      double disc = 1.0;
      for (int t = 0; t < cfg.truncation_depth; ++t) {
        int a_def = rng.bernoulli(def(b)) ? 1 : 0;
        int a_att = rng.bernoulli(att(b, s)) ? 1 : 0;
        double c = sim_step(game, obs, a_def, a_att, s, b, att, rng);
        acc += disc * (player == ColPlayer::Defender ? c : -c);
        disc *= game.discount;
      }
      total += acc;
    }
    return total / static_cast<double>(cfg.mc_samples);
  };
}

namespace {

struct RolloutCtx {
  const AptGame& game;
  const std::vector<std::vector<double>>& obs;
  double theta;
  ColPlayer player;
  const AptDefenderStrategy& conj_def;
  const AptAttackerStrategy& conj_att;
  const CostToGo& tail;
  int lookahead;
  int mc_samples;
};

double rollout_value(const RolloutCtx& ctx, const std::vector<double>& b,
                     int s, int depth, RngStream rng);

double rollout_q(const RolloutCtx& ctx, const std::vector<double>& b, int s,
                 int depth, int action, RngStream rng) {
  double total = 0.0;
  for (int k = 0; k < ctx.mc_samples; ++k) {
    // Common random numbers: the same sample substream for both actions.
    RngStream r = rng.substream("mc", static_cast<uint64_t>(k));
    std::vector<double> b2 = b;
    int s2;
    int a_def, a_att;
    double sign;
    if (ctx.player == ColPlayer::Defender) {
      s2 = r.categorical(b);
      a_def = action;
      a_att = r.bernoulli(ctx.conj_att(b, s2)) ? 1 : 0;
      sign = 1.0;
    } else {
      s2 = s;
      a_def = r.bernoulli(ctx.conj_def(b)) ? 1 : 0;
      a_att = action;
      sign = -1.0;
    }
    double c = sign * sim_step(ctx.game, ctx.obs, a_def, a_att, s2, b2,
                               ctx.conj_att, r);
    total += c + ctx.game.discount *
                     rollout_value(ctx, b2, s2, depth + 1,
                                   r.substream("next"));
  }
  return total / static_cast<double>(ctx.mc_samples);
}

double rollout_value(const RolloutCtx& ctx, const std::vector<double>& b,
                     int s, int depth, RngStream rng) {
  if (depth >= ctx.lookahead) return ctx.tail(b, s);
  double best = rollout_q(ctx, b, s, depth, 0, rng);
  double q1 = rollout_q(ctx, b, s, depth, 1, rng);
  return std::min(best, q1);
}

}  // namespace

int rollout_action(ColPlayer player, const AptGame& game, double theta,
                   const std::vector<double>& belief, int state,
                   const AptDefenderStrategy& conj_def,
                   const AptAttackerStrategy& conj_att, const CostToGo& tail,
                   int lookahead, int mc_samples, RngStream rng) {
  game.validate();
  if (static_cast<int>(belief.size()) != game.server_count + 1) {
    throw std::invalid_argument("belief has wrong dimension");
  }
  if (player == ColPlayer::Attacker &&
      (state < 0 || state > game.server_count)) {
    throw std::invalid_argument("attacker rollout needs the true state");
  }
  if (lookahead < 0) throw std::invalid_argument("lookahead must be >= 0");
  if (lookahead == 0) {
    double p = player == ColPlayer::Defender ? conj_def(belief)
                                             : conj_att(belief, state);
    return rng.bernoulli(p) ? 1 : 0;
  }
  if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
  auto obs = game.obs_family(theta);
  check_obs_rows(obs, game.server_count + 1);
  RolloutCtx ctx{game,    obs,      theta, player, conj_def,
                 conj_att, tail,    lookahead, mc_samples};
  int best_action = 0;
  double best = rollout_q(ctx, belief, state, 0, 0, rng);
  double q1 = rollout_q(ctx, belief, state, 0, 1, rng);
  if (q1 < best - 1e-12) {
    best_action = 1;
  }
  return best_action;
}

// --- Conjectural online learning loop ----------------------------------------

void ColConfig::validate() const {
  game.validate();
  if (!true_theta) throw std::invalid_argument("true_theta must be set");
  theta_def.validate();
  theta_att.validate();
  if (lookahead_support.empty()) {
    throw std::invalid_argument("lookahead support must be nonempty");
  }
  if (lookahead_support.size() != lookahead_prior.size()) {
    throw std::invalid_argument("lookahead prior has wrong dimension");
  }
  for (int l : lookahead_support) {
    if (l < 0) throw std::invalid_argument("lookahead values must be >= 0");
  }
  double total = std::accumulate(lookahead_prior.begin(),
                                 lookahead_prior.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("lookahead prior does not sum to 1");
  }
  if (lookahead_def < 0 || lookahead_att < 0) {
    throw std::invalid_argument("lookaheads must be >= 0");
  }
  if (!base_def || !base_att) {
    throw std::invalid_argument("base strategies must be set");
  }
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

ColConfig ColConfig::example() {
  ColConfig cfg;
  cfg.game = AptGame::example(1, 0.2);
  cfg.true_theta = [](int) { return 0.8; };
  cfg.theta_def = ConjecturePosterior::uniform({0.6, 0.8});
  cfg.theta_att = ConjecturePosterior::uniform({0.8});
  cfg.lookahead_support = {1};
  cfg.lookahead_prior = {1.0};
  cfg.base_def = threshold_defender(0.75);
  cfg.base_att = mixed_attacker(0.05);
  cfg.rollout.lookahead = 1;
  cfg.rollout.mc_samples = 10;
  cfg.rollout.truncation_depth = 15;
  cfg.horizon = 50;
  return cfg;
}

namespace {

std::string belief_bucket_key(const std::vector<double>& b) {
  std::string key;
  char buf[32];
  for (double v : b) {
    std::snprintf(buf, sizeof(buf), "%lld,",
                  static_cast<long long>(std::llround(v * 1e6)));
    key += buf;
  }
  return key;
}

// Freeze an attacker strategy into a state-conditioned table at one belief:
// nested simulations evaluate the conjectured attacker at the decision-point
// belief only, which keeps the rollout cost bounded.
AptAttackerStrategy freeze_attacker(std::vector<double> table) {
  return [table = std::move(table)](const std::vector<double>&, int s) {
    return table[static_cast<size_t>(s)];
  };
}

}  // namespace

ColTrace col_run(const ColConfig& cfg, uint64_t seed) {
  cfg.validate();
  const AptGame& game = cfg.game;
  int n = game.server_count;
  RngStream root(seed);

  std::vector<double> b(static_cast<size_t>(n) + 1, 0.0);
  b[0] = 1.0;
  int s = 0;
  ConjecturePosterior rho = cfg.theta_def;
  ConjecturePosterior rho_att = cfg.theta_att;
  std::vector<double> mu = cfg.lookahead_prior;

  double theta_bar = rho.support[static_cast<size_t>(rho.mode())];
  int ell_bar = cfg.lookahead_support[0];
  AptAttackerStrategy att_conj = cfg.base_att;  // conjectured attacker strategy
  int prev_a_def = 0;
  AptAttackerStrategy prev_att_conj = att_conj;

  std::map<std::string, std::pair<std::vector<double>, double>> buckets;
  ColTrace trace;
  trace.steps.reserve(static_cast<size_t>(cfg.horizon));

  // Attacker rollout policy under conjectured lookahead ell, frozen at b0.
  auto attacker_table = [&](double theta, int ell,
                            const std::vector<double>& b0,
                            uint64_t tag) {
    std::vector<double> table(static_cast<size_t>(n) + 1, 0.0);
    if (ell == 0) {
      for (int st = 0; st <= n; ++st) table[static_cast<size_t>(st)] =
          cfg.base_att(b0, st);
      return table;
    }
    CostToGo tail = base_pair_cost_to_go(game, theta, ColPlayer::Attacker,
                                         cfg.base_def, cfg.base_att,
                                         cfg.rollout, seed ^ (tag * 0x9e37ULL));
    for (int st = 0; st <= n; ++st) {
      int a = rollout_action(ColPlayer::Attacker, game, theta, b0, st,
                             cfg.base_def, cfg.base_att, tail, ell,
                             cfg.rollout.mc_samples,
                             root.substream("att-table", tag * 131ULL +
                                                             static_cast<uint64_t>(st)));
      table[static_cast<size_t>(st)] = static_cast<double>(a);
    }
    return table;
  };

  for (int t = 1; t <= cfg.horizon; ++t) {
    ColStep step;
    step.t = t;
    step.state = s;
    int a_def, a_att;
    if (t == 1) {
      RngStream r = root.substream("init");
      a_def = r.bernoulli(cfg.base_def(b)) ? 1 : 0;
      a_att = r.bernoulli(cfg.base_att(b, s)) ? 1 : 0;
      step.obs = -1;
    } else {
      double theta_true = cfg.true_theta(t);
      auto true_obs = game.obs_family(theta_true);
      check_obs_rows(true_obs, n + 1);
      int o = root.substream("obs", static_cast<uint64_t>(t))
                  .categorical(true_obs[static_cast<size_t>(s)]);
      step.obs = o;

      // Defender: posterior over observation parameters. The prediction uses
      // the previous conjectured attacker strategy and is parameter-free, so
      // it is shared across conjectures.
      std::vector<double> pred = predict_state(game, b, prev_a_def,
                                               prev_att_conj);
      std::vector<double> like(rho.support.size());
      for (size_t i = 0; i < rho.support.size(); ++i) {
        auto rows = game.obs_family(rho.support[i]);
        double l = 0.0;
        for (int s2 = 0; s2 <= n; ++s2) {
          l += pred[static_cast<size_t>(s2)] *
               rows[static_cast<size_t>(s2)][static_cast<size_t>(o)];
        }
        like[i] = l;
      }
      rho = bayes_conjecture_update(rho, like);

      // Posterior over the attacker's lookahead: each candidate induces a
      // conjectured attacker strategy, hence a different state prediction.
      if (cfg.lookahead_support.size() > 1) {
        // Posterior-mean observation rows for the feedback likelihood.
        std::vector<std::vector<double>> mean_rows(
            static_cast<size_t>(n) + 1,
            std::vector<double>(game.obs_family(rho.support[0])[0].size(),
                                0.0));
        for (size_t i = 0; i < rho.support.size(); ++i) {
          auto rows = game.obs_family(rho.support[i]);
          for (int s2 = 0; s2 <= n; ++s2) {
            for (size_t oo = 0; oo < mean_rows[0].size(); ++oo) {
              mean_rows[static_cast<size_t>(s2)][oo] +=
                  rho.weights[i] * rows[static_cast<size_t>(s2)][oo];
            }
          }
        }
        double theta_mean = rho.mean();
        std::vector<double> like_mu(cfg.lookahead_support.size());
        for (size_t j = 0; j < cfg.lookahead_support.size(); ++j) {
          AptAttackerStrategy att_j = freeze_attacker(attacker_table(
              theta_mean, cfg.lookahead_support[j], b,
              static_cast<uint64_t>(t) * 17ULL + j));
          std::vector<double> pred_j = predict_state(game, b, prev_a_def,
                                                     att_j);
          double l = 0.0;
          for (int s2 = 0; s2 <= n; ++s2) {
            l += pred_j[static_cast<size_t>(s2)] *
                 mean_rows[static_cast<size_t>(s2)][static_cast<size_t>(o)];
          }
          like_mu[j] = l;
        }
        ConjecturePosterior mu_post;
        mu_post.support.assign(cfg.lookahead_support.begin(),
                               cfg.lookahead_support.end());
        mu_post.weights = mu;
        mu = bayes_conjecture_update(mu_post, like_mu).weights;
      }

      // Sample the conjectures for this step.
      theta_bar = rho.support[static_cast<size_t>(
          root.substream("theta", static_cast<uint64_t>(t))
              .categorical(rho.weights))];
      ell_bar = cfg.lookahead_support[static_cast<size_t>(
          root.substream("ell", static_cast<uint64_t>(t)).categorical(mu))];

      // Conjectured attacker at the previous belief drives the filter.
      AptAttackerStrategy att_filter = freeze_attacker(attacker_table(
          theta_bar, ell_bar, b, static_cast<uint64_t>(t) * 17ULL + 7ULL));
      b = apt_belief_update(game, theta_bar, b, prev_a_def, o, att_filter);

      // Conjectured attacker at the new belief for the defender's rollout.
      std::vector<double> att_now_table = attacker_table(
          theta_bar, ell_bar, b, static_cast<uint64_t>(t) * 17ULL + 11ULL);
      att_conj = freeze_attacker(att_now_table);

      CostToGo tail_def = base_pair_cost_to_go(
          game, theta_bar, ColPlayer::Defender, cfg.base_def, att_conj,
          cfg.rollout, seed ^ (static_cast<uint64_t>(t) * 0x51edULL));
      a_def = rollout_action(ColPlayer::Defender, game, theta_bar, b, -1,
                             cfg.base_def, att_conj, tail_def,
                             cfg.lookahead_def, cfg.rollout.mc_samples,
                             root.substream("def", static_cast<uint64_t>(t)));

      // Attacker: posterior from (o_t, s_t); it observes the state.
      std::vector<double> like_att(rho_att.support.size());
      for (size_t i = 0; i < rho_att.support.size(); ++i) {
        auto rows = game.obs_family(rho_att.support[i]);
        like_att[i] = rows[static_cast<size_t>(s)][static_cast<size_t>(o)];
      }
      rho_att = bayes_conjecture_update(rho_att, like_att);
      double theta_att_bar = rho_att.support[static_cast<size_t>(
          root.substream("theta-att", static_cast<uint64_t>(t))
              .categorical(rho_att.weights))];
      CostToGo tail_att = base_pair_cost_to_go(
          game, theta_att_bar, ColPlayer::Attacker, cfg.base_def, cfg.base_att,
          cfg.rollout, seed ^ (static_cast<uint64_t>(t) * 0xa24bULL));
      a_att = rollout_action(ColPlayer::Attacker, game, theta_att_bar, b, s,
                             cfg.base_def, cfg.base_att, tail_att,
                             cfg.lookahead_att, cfg.rollout.mc_samples,
                             root.substream("att", static_cast<uint64_t>(t)));
      // Next step's prediction starts from the current belief, so it must use
      // the attacker conjecture frozen at this belief, not the filter table.
      prev_att_conj = att_conj;
    }

    step.a_def = a_def;
    step.a_att = a_att;
    step.cost = apt_cost(game, s, a_def);
    step.belief = b;
    step.theta_posterior = rho.weights;
    step.lookahead_posterior = mu;
    step.conjecture_theta = theta_bar;
    step.conjecture_lookahead = ell_bar;
    trace.steps.push_back(step);

    auto& bucket = buckets[belief_bucket_key(b)];
    if (bucket.first.empty()) bucket.first = b;
    bucket.second += 1.0;

    std::vector<double> row = apt_transition(game, s, a_def, a_att);
    s = root.substream("step", static_cast<uint64_t>(t)).categorical(row);
    prev_a_def = a_def;
  }

  for (auto& [key, bucket] : buckets) {
    trace.occupancy.points.emplace_back(
        bucket.first, bucket.second / static_cast<double>(cfg.horizon));
  }
  return trace;
}

std::string col_trace_csv(const ColTrace& trace) {
  std::ostringstream out;
  size_t nb = trace.steps.empty() ? 0 : trace.steps[0].belief.size();
  size_t nr = trace.steps.empty() ? 0 : trace.steps[0].theta_posterior.size();
  size_t nm = trace.steps.empty() ? 0
                                  : trace.steps[0].lookahead_posterior.size();
  out << "t,state,obs,a_def,a_att,cost,conjecture_theta,conjecture_lookahead";
  for (size_t i = 0; i < nb; ++i) out << ",b" << i;
  for (size_t i = 0; i < nr; ++i) out << ",rho" << i;
  for (size_t i = 0; i < nm; ++i) out << ",mu" << i;
  out << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << "," << buf;
  };
  for (const auto& s : trace.steps) {
    out << s.t << "," << s.state << "," << s.obs << "," << s.a_def << ","
        << s.a_att;
    num(s.cost);
    num(s.conjecture_theta);
    out << "," << s.conjecture_lookahead;
    for (double v : s.belief) num(v);
    for (double v : s.theta_posterior) num(v);
    for (double v : s.lookahead_posterior) num(v);
    out << "\n";
  }
  return out.str();
}

double discrepancy_gap(const AptGame& game, double true_theta,
                       const ConjecturePosterior& posterior,
                       const BeliefOccupancy& occupancy) {
  posterior.validate();
  std::vector<double> k(posterior.support.size());
  double k_star = kInf;
  for (size_t i = 0; i < posterior.support.size(); ++i) {
    k[i] = discrepancy(game, true_theta, posterior.support[i], occupancy);
    k_star = std::min(k_star, k[i]);
  }
  double gap = 0.0;
  for (size_t i = 0; i < k.size(); ++i) {
    if (posterior.weights[i] == 0.0) continue;  // 0 * inf = 0 here
    gap += posterior.weights[i] * (k[i] - k_star);
  }
  return gap;
}

// --- Berk-Nash analysis of the two-conjecture example -------------------------

std::array<double, 2> berk_nash_closed_form_costs(double gamma, double x) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must be in [0, 1)");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument("transition parameter must be in [0, 1]");
  }
  // (I - gamma * P) J = c with P = [[1-x, x], [1, 0]], c = (0, -1):
  // [[1 - gamma(1-x), -gamma x], [-gamma, 1]] J = (0, -1).
  double m00 = 1.0 - gamma * (1.0 - x);
  double m01 = -gamma * x;
  double m10 = -gamma;
  double m11 = 1.0;
  double det = m00 * m11 - m01 * m10;
  double c0 = 0.0, c1 = -1.0;
  return {(m11 * c0 - m01 * c1) / det, (m00 * c1 - m10 * c0) / det};
}

double berk_nash_stationary_nu0(double p, double q, double rho_a) {
  return -1.0 / (-1.0 - p + rho_a * p - rho_a * q);
}

BerkNashExampleReport check_berk_nash(double p, double q, double gamma) {
  if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("alert probabilities must be in [0, 1]");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("gamma must be in [0, 1)");
  }
  BerkNashExampleReport rep;

  // Stage costs of the worked instance (unit recovery charge, recovery gain
  // 2 under intrusion): c(b, continue) = b, c(b, stop) = 1 - 2b.
  auto stage = [](int b, int a) {
    return a == 1 ? 1.0 - 2.0 * static_cast<double>(b)
                  : static_cast<double>(b);
  };

  // Condition (i): the base thresholds must solve the one-step Bellman
  // minimization under every conjecture. Conjecture A induces the belief
  // chain parameter q, conjecture B the parameter p.
  rep.rational = true;
  for (double x : {q, p}) {
    std::array<double, 2> j = berk_nash_closed_form_costs(gamma, x);
    // At belief 0: continue moves to belief 1 w.p. x; stop resets to 0.
    double q_cont0 = stage(0, 0) + gamma * ((1.0 - x) * j[0] + x * j[1]);
    double q_stop0 = stage(0, 1) + gamma * j[0];
    // At belief 1: continue stays at 1; stop resets to 0.
    double q_cont1 = stage(1, 0) + gamma * j[1];
    double q_stop1 = stage(1, 1) + gamma * j[0];
    if (!(q_cont0 <= q_stop0 + 1e-12) || !(q_stop1 <= q_cont1 + 1e-12)) {
      rep.rational = false;
    }
  }

  // Condition (iii): the belief dynamics are coupled to the state through
  // the identity alert model, so the realized occupancy is the stationary
  // distribution of the conjecture-A chain, and the stationarity equation
  // pins the posterior weight on conjecture A to 1.
  rep.rho_a = 1.0;
  rep.nu[0] = berk_nash_stationary_nu0(p, q, rep.rho_a);
  rep.nu[1] = 1.0 - rep.nu[0];
  {
    double m = rep.rho_a * q + (1.0 - rep.rho_a) * p;  // P[0 -> 1] mixture
    double residual = std::abs(rep.nu[0] * (1.0 + m) - 1.0);
    rep.stationary = residual < 1e-12;
  }
  rep.surviving_conjecture = 0;

  // Condition (ii): discrepancy of each conjecture at nu, with the feedback
  // distribution evaluated at the belief treated as the state.
  auto kl_at = [&](double z_conj_alert_at0, double z_conj_alert_at1) {
    std::vector<double> true0 = {1.0 - p, p};
    std::vector<double> true1 = {1.0 - q, q};
    std::vector<double> c0 = {1.0 - z_conj_alert_at0, z_conj_alert_at0};
    std::vector<double> c1 = {1.0 - z_conj_alert_at1, z_conj_alert_at1};
    double k = 0.0;
    if (rep.nu[0] > 0.0) {
      double d = kl_divergence(true0, c0);
      if (d == kInf) return kInf;
      k += rep.nu[0] * d;
    }
    if (rep.nu[1] > 0.0) {
      double d = kl_divergence(true1, c1);
      if (d == kInf) return kInf;
      k += rep.nu[1] * d;
    }
    return k;
  };
  rep.discrepancy_by_conjecture[0] = kl_at(0.0, 1.0);  // identity model
  rep.discrepancy_by_conjecture[1] = kl_at(1.0, 0.0);  // flipped model
  double k_min = std::min(rep.discrepancy_by_conjecture[0],
                          rep.discrepancy_by_conjecture[1]);
  for (int i = 0; i < 2; ++i) {
    double k = rep.discrepancy_by_conjecture[static_cast<size_t>(i)];
    bool minimal = (k == k_min) || (k <= k_min + 1e-12);
    if (minimal) rep.consistent_set.push_back(i);
  }
  rep.consistent = std::find(rep.consistent_set.begin(),
                             rep.consistent_set.end(),
                             0) != rep.consistent_set.end();

  rep.has_equilibrium = rep.rational && rep.consistent && rep.stationary;
  rep.conflict = rep.rational && rep.stationary && !rep.consistent;
  return rep;
}

// --- Client arrival-rate model -------------------------------------------------

double arrival_rate(double t, const std::vector<double>& psi,
                    const std::vector<double>& chi,
                    const std::vector<double>& omega,
                    const std::vector<double>& phi) {
  if (chi.size() != omega.size() || chi.size() != phi.size()) {
    throw std::invalid_argument(
        "chi, omega, and phi must have the same length");
  }
  double exponent = 0.0;
  double power = 1.0;
  for (double c : psi) {
    power *= t;
    exponent += c * power;
  }
  for (size_t k = 0; k < chi.size(); ++k) {
    exponent += chi[k] * std::sin(omega[k] * t + phi[k]);
  }
  return std::exp(exponent);
}

}  // namespace resp
