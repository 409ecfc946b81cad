#include "resp/causal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace resp {

// --- Environment ---------------------------------------------------------------

int ScmEnvironment::zone_count() const {
  int z = 0;
  for (int v : zone) z = std::max(z, v);
  return z;
}

double ScmEnvironment::downtime_cost(int z) const {
  if (z < 0 || z >= static_cast<int>(psi.size())) return 0.0;
  return psi[static_cast<size_t>(z)];
}

double ScmEnvironment::intrusion_cost(int z, Intrusion i) const {
  if (i != Intrusion::Root) return 0.0;
  if (z < 0 || z >= static_cast<int>(beta_root.size())) return 0.0;
  return beta_root[static_cast<size_t>(z)];
}

namespace {

void check_pmf(const std::vector<double>& w, const char* what) {
  if (w.empty()) throw std::invalid_argument(std::string(what) + " pmf is empty");
  double total = 0.0;
  for (double x : w) {
    if (x < 0.0) {
      throw std::invalid_argument(std::string(what) + " pmf has a negative entry");
    }
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + " pmf does not sum to 1");
  }
}

}  // namespace

void ScmEnvironment::validate() const {
  if (zone.empty()) throw std::invalid_argument("environment has no nodes");
  for (int z : zone) {
    if (z < 1) throw std::invalid_argument("zone ids must be >= 1");
  }
  int n = node_count();
  for (auto [a, b] : workflow_edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      throw std::invalid_argument("workflow edge references a missing node");
    }
  }
  if (decoy_count < 0 || decoy_count > 31) {
    throw std::invalid_argument("decoy catalog size must be in [0, 31]");
  }
  if (!exploit_vuln.empty() && static_cast<int>(exploit_vuln.size()) != n) {
    throw std::invalid_argument("exploit_vuln must have one entry per node");
  }
  for (int v : exploit_vuln) {
    if (v < 0 || (decoy_count > 0 && v >= decoy_count)) {
      throw std::invalid_argument("exploit vulnerability id out of range");
    }
  }
  if (exploit_success < 0.0 || exploit_success > 1.0) {
    throw std::invalid_argument("exploit_success must be a probability");
  }
  check_pmf(arrival_dist, "arrival");
  check_pmf(departure_dist, "departure");
  if (max_clients < 0) throw std::invalid_argument("max_clients must be >= 0");
  if (noise_base < 0.0 || noise_per_client < 0.0 || noise_cap < 0.0 ||
      noise_cap > 1.0) {
    throw std::invalid_argument("observation noise parameters out of range");
  }
  for (double v : psi) {
    if (v < 0.0) throw std::invalid_argument("downtime costs must be >= 0");
  }
  for (double v : beta_root) {
    if (v < 0.0) throw std::invalid_argument("intrusion costs must be >= 0");
  }
  if (restore_cost < 0.0) {
    throw std::invalid_argument("restore cost must be >= 0");
  }
  if (discount < 0.0 || discount >= 1.0) {
    throw std::invalid_argument("discount must be in [0, 1)");
  }
  if (attackers.empty()) {
    throw std::invalid_argument("at least one attacker automaton is required");
  }
  if (!attacker_prior.empty()) {
    if (attacker_prior.size() != attackers.size()) {
      throw std::invalid_argument("attacker prior has wrong dimension");
    }
    check_pmf(attacker_prior, "attacker prior");
  }
  if (attack_path.empty()) {
    throw std::invalid_argument("attack path must be nonempty");
  }
  for (int i : attack_path) {
    if (i < 0 || i >= n) {
      throw std::invalid_argument("attack path references a missing node");
    }
  }
}

ScmEnvironment ScmEnvironment::example(int nodes) {
  if (nodes < 1) throw std::invalid_argument("example needs >= 1 node");
  ScmEnvironment env;
  env.zone.assign(static_cast<size_t>(nodes), 3);
  env.zone[0] = 1;
  for (int i = 0; i + 1 < nodes; ++i) env.workflow_edges.emplace_back(i, i + 1);
  env.decoy_count = 1;
  env.exploit_vuln.assign(static_cast<size_t>(nodes), 0);
  env.exploit_success = 0.8;
  env.arrival_dist = {0.5, 0.5};
  env.departure_dist = {0.5, 0.5};
  env.max_clients = 3;
  env.psi = {0.0, 0.0, 0.0, 10.0};        // zone 3 carries the downtime cost
  env.beta_root = {0.0, 0.1, 1.0, 1.0};   // root intrusion cost by zone
  env.attackers = {bline_attacker()};
  env.attack_path.resize(static_cast<size_t>(nodes));
  std::iota(env.attack_path.begin(), env.attack_path.end(), 0);
  return env;
}

// --- Attacker automata ------------------------------------------------------------

namespace {

// Advance one node along the intrusion ladder.
AttackerAction advance_node(const ScmEnvironment& env, int i, Intrusion state) {
  AttackerAction a;
  switch (state) {
    case Intrusion::Unknown:
      a.type = AttackType::Discover;
      a.zone = env.zone[static_cast<size_t>(i)];
      break;
    case Intrusion::Known:
      a.type = AttackType::Scan;
      a.node = i;
      break;
    case Intrusion::Scanned:
      a.type = AttackType::Exploit;
      a.node = i;
      a.vuln = env.exploit_vuln.empty() ? 0
                                        : env.exploit_vuln[static_cast<size_t>(i)];
      a.root = false;
      break;
    case Intrusion::Compromised:
      a.type = AttackType::Escalate;
      a.node = i;
      break;
    case Intrusion::Root:
      break;
  }
  return a;
}

}  // namespace

AttackerAutomaton bline_attacker() {
  return [](const ScmEnvironment& env, const std::vector<Intrusion>& intrusion) {
    for (int i : env.attack_path) {
      Intrusion s = intrusion[static_cast<size_t>(i)];
      if (s != Intrusion::Root) return advance_node(env, i, s);
    }
    AttackerAction a;
    a.type = AttackType::Impact;
    a.node = env.attack_path.back();
    return a;
  };
}

AttackerAutomaton meander_attacker() {
  return [](const ScmEnvironment& env, const std::vector<Intrusion>& intrusion) {
    int zmax = env.zone_count();
    for (int z = 1; z <= zmax; ++z) {
      for (int i = 0; i < env.node_count(); ++i) {
        if (env.zone[static_cast<size_t>(i)] != z) continue;
        Intrusion s = intrusion[static_cast<size_t>(i)];
        if (s != Intrusion::Root) return advance_node(env, i, s);
      }
    }
    AttackerAction a;
    a.type = AttackType::Impact;
    a.node = env.attack_path.back();
    return a;
  };
}

// --- Markov state -----------------------------------------------------------------

MarkovState initial_state(const ScmEnvironment& env) {
  MarkovState s;
  size_t n = static_cast<size_t>(env.node_count());
  s.intrusion.assign(n, Intrusion::Unknown);
  s.decoys.assign(n, 0u);
  s.service.assign(n, 1);
  s.clients = 0;
  s.prev_attack = AttackerAction{};
  s.attacker_id = 0;
  return s;
}

std::string markov_key(const MarkovState& s) {
  std::ostringstream out;
  for (Intrusion i : s.intrusion) out << static_cast<int>(i);
  out << '|';
  for (uint32_t d : s.decoys) out << d << ',';
  out << '|';
  for (uint8_t v : s.service) out << static_cast<int>(v);
  out << '|' << s.clients << '|' << static_cast<int>(s.prev_attack.type) << ','
      << s.prev_attack.node << ',' << s.prev_attack.zone << ','
      << s.prev_attack.vuln << ',' << (s.prev_attack.root ? 1 : 0) << '|'
      << s.attacker_id;
  return out.str();
}

// --- Interventions ----------------------------------------------------------------

std::vector<Intervention> full_intervention_set(const ScmEnvironment& env) {
  std::vector<Intervention> out;
  out.push_back(Intervention{});  // none
  for (int i = 0; i < env.node_count(); ++i) {
    out.push_back(Intervention{InterventionType::Analyze, i, -1});
    for (int j = 0; j < env.decoy_count; ++j) {
      out.push_back(Intervention{InterventionType::Decoy, i, j});
    }
    out.push_back(Intervention{InterventionType::Remove, i, -1});
    out.push_back(Intervention{InterventionType::Restore, i, -1});
  }
  return out;
}

double intervention_cost(const ScmEnvironment& env, const Intervention& iv) {
  return iv.type == InterventionType::Restore ? env.restore_cost : 0.0;
}

namespace {

void check_node(const ScmEnvironment& env, const Intervention& iv) {
  if (iv.node < 0 || iv.node >= env.node_count()) {
    throw InterventionError("intervention targets a missing node");
  }
}

// Apply the do-operator of an intervention to the current state. Strict mode
// rejects remove/restore whose intrusion-state precondition fails; lenient
// mode treats them as no-ops on the intrusion state (used by the planner,
// whose sampled particles need not satisfy the precondition).
MarkovState apply_intervention(const ScmEnvironment& env, const MarkovState& s,
                               const Intervention& iv, bool strict) {
  MarkovState out = s;
  switch (iv.type) {
    case InterventionType::None:
      break;
    case InterventionType::Analyze:
      check_node(env, iv);
      break;  // affects the observation only
    case InterventionType::Decoy: {
      check_node(env, iv);
      if (iv.decoy < 0 || iv.decoy >= env.decoy_count) {
        throw InterventionError("decoy id out of range");
      }
      out.decoys[static_cast<size_t>(iv.node)] |= (1u << iv.decoy);
      break;
    }
    case InterventionType::Remove: {
      check_node(env, iv);
      Intrusion& cur = out.intrusion[static_cast<size_t>(iv.node)];
      if (cur == Intrusion::Compromised) {
        cur = Intrusion::Scanned;
      } else if (strict) {
        throw InterventionError("remove requires a compromised node");
      }
      break;
    }
    case InterventionType::Restore: {
      check_node(env, iv);
      Intrusion& cur = out.intrusion[static_cast<size_t>(iv.node)];
      if (cur == Intrusion::Compromised || cur == Intrusion::Root) {
        cur = Intrusion::Scanned;
        out.decoys[static_cast<size_t>(iv.node)] = 0u;
      } else if (strict) {
        throw InterventionError("restore requires a compromised or rooted node");
      }
      break;
    }
  }
  return out;
}

bool workflow_edge(const ScmEnvironment& env, int a, int b) {
  for (auto [x, y] : env.workflow_edges) {
    if (x == a && y == b) return true;
  }
  return false;
}

// Intrusion transition of one node: the case list of the intrusion ladder,
// guarded by the source state of each arc in the transition diagram.
Intrusion intrusion_next(const ScmEnvironment& env, int i, Intrusion cur,
                         const AttackerAction& a, uint32_t decoys,
                         bool exploit_ok) {
  int z = env.zone[static_cast<size_t>(i)];
  if (a.type == AttackType::Discover && a.zone == z &&
      cur == Intrusion::Unknown) {
    return Intrusion::Known;
  }
  if (env.workflow_discovery && a.type == AttackType::Escalate &&
      workflow_edge(env, a.node, i) && cur == Intrusion::Unknown) {
    return Intrusion::Known;
  }
  if (a.type == AttackType::Scan && a.node == i && cur == Intrusion::Known) {
    return Intrusion::Scanned;
  }
  bool decoy_clear = ((decoys >> a.vuln) & 1u) == 0u;
  if (a.type == AttackType::Exploit && a.node == i && !a.root && decoy_clear &&
      exploit_ok && cur == Intrusion::Scanned) {
    return Intrusion::Compromised;
  }
  if (a.type == AttackType::Exploit && a.node == i && a.root && decoy_clear &&
      exploit_ok && cur == Intrusion::Scanned) {
    return Intrusion::Root;
  }
  if (a.type == AttackType::Escalate && a.node == i &&
      cur == Intrusion::Compromised) {
    return Intrusion::Root;
  }
  return cur;
}

double noise_level(const ScmEnvironment& env, int clients) {
  return std::min(env.noise_cap,
                  env.noise_base + env.noise_per_client * clients);
}

}  // namespace

AttackerAction attacker_action(const ScmEnvironment& env, const MarkovState& s) {
  if (s.attacker_id < 0 ||
      s.attacker_id >= static_cast<int>(env.attackers.size())) {
    throw std::invalid_argument("attacker id out of range");
  }
  return env.attackers[static_cast<size_t>(s.attacker_id)](env, s.intrusion);
}

MarkovState scm_transition(const ScmEnvironment& env, const MarkovState& s,
                           const Intervention& iv, const ExogenousDraw& exo,
                           bool strict) {
  MarkovState cur = apply_intervention(env, s, iv, strict);
  AttackerAction a = attacker_action(env, cur);

  MarkovState next = cur;
  next.prev_attack = a;
  next.clients = std::clamp(cur.clients + exo.arrivals - exo.departures, 0,
                            env.max_clients);
  for (int i = 0; i < env.node_count(); ++i) {
    size_t idx = static_cast<size_t>(i);
    next.intrusion[idx] = intrusion_next(env, i, cur.intrusion[idx], a,
                                         cur.decoys[idx], exo.exploit_ok);
    if (a.type == AttackType::Impact && a.node == i) next.service[idx] = 0;
  }
  return next;
}

std::string observation_key(const ScmObservation& o) {
  std::ostringstream out;
  for (int z : o.activity) out << z;
  out << '|';
  for (uint32_t d : o.decoys) out << d << ',';
  out << '|';
  for (uint8_t v : o.service) out << static_cast<int>(v);
  out << '|' << o.clients;
  return out.str();
}

ScmObservation sample_observation(const ScmEnvironment& env,
                                  const MarkovState& next,
                                  const Intervention& iv, RngStream rng) {
  ScmObservation o;
  o.decoys = next.decoys;
  o.service = next.service;
  o.clients = next.clients;
  double eps = noise_level(env, next.clients);
  o.activity.resize(next.intrusion.size());
  for (size_t i = 0; i < next.intrusion.size(); ++i) {
    int truth = static_cast<int>(next.intrusion[i]);
    bool analyzed = iv.type == InterventionType::Analyze &&
                    iv.node == static_cast<int>(i);
    if (analyzed || !rng.bernoulli(eps)) {
      o.activity[i] = truth;
    } else {
      int other = rng.uniform_int(4);
      o.activity[i] = other >= truth ? other + 1 : other;
    }
  }
  return o;
}

double observation_likelihood(const ScmEnvironment& env,
                              const MarkovState& next, const Intervention& iv,
                              const ScmObservation& obs) {
  if (obs.decoys != next.decoys || obs.service != next.service ||
      obs.clients != next.clients) {
    return 0.0;
  }
  double eps = noise_level(env, next.clients);
  double like = 1.0;
  for (size_t i = 0; i < next.intrusion.size(); ++i) {
    int truth = static_cast<int>(next.intrusion[i]);
    bool analyzed = iv.type == InterventionType::Analyze &&
                    iv.node == static_cast<int>(i);
    if (analyzed) {
      if (obs.activity[i] != truth) return 0.0;
    } else {
      like *= obs.activity[i] == truth ? 1.0 - eps : eps / 4.0;
    }
  }
  return like;
}

double stage_reward(const ScmEnvironment& env, const MarkovState& s) {
  double r = 0.0;
  for (int i = 0; i < env.node_count(); ++i) {
    size_t idx = static_cast<size_t>(i);
    int z = env.zone[idx];
    r += env.downtime_cost(z) * (static_cast<double>(s.service[idx]) - 1.0);
    r -= env.intrusion_cost(z, s.intrusion[idx]);
  }
  return r;
}

namespace {

ExogenousDraw draw_exogenous(const ScmEnvironment& env, RngStream& rng) {
  ExogenousDraw exo;
  exo.exploit_ok = rng.bernoulli(env.exploit_success);
  exo.arrivals = rng.categorical(env.arrival_dist);
  exo.departures = rng.categorical(env.departure_dist);
  return exo;
}

}  // namespace

StepResult scm_step(const ScmEnvironment& env, const MarkovState& s,
                    const Intervention& iv, uint64_t seed) {
  env.validate();
  RngStream rng(seed);
  ExogenousDraw exo = draw_exogenous(env, rng);
  StepResult out;
  out.state = scm_transition(env, s, iv, exo, /*strict=*/true);
  out.obs = sample_observation(env, out.state, iv, rng.substream("obs"));
  out.reward = stage_reward(env, out.state);
  return out;
}

// --- Particle filter --------------------------------------------------------------

ParticleSet initial_particles(const ScmEnvironment& env, int m, uint64_t seed) {
  env.validate();
  if (m < 1) throw std::invalid_argument("particle count must be >= 1");
  std::vector<double> prior = env.attacker_prior;
  if (prior.empty()) {
    prior.assign(env.attackers.size(), 1.0 / static_cast<double>(
                                                 env.attackers.size()));
  }
  RngStream rng(seed);
  ParticleSet ps;
  ps.particles.reserve(static_cast<size_t>(m));
  MarkovState base = initial_state(env);
  for (int i = 0; i < m; ++i) {
    MarkovState s = base;
    s.attacker_id = rng.substream("attacker", static_cast<uint64_t>(i))
                        .categorical(prior);
    ps.particles.push_back(std::move(s));
  }
  return ps;
}

ParticleSet particle_update(const ScmEnvironment& env, const ParticleSet& ps,
                            const Intervention& iv, const ScmObservation& obs,
                            uint64_t seed) {
  if (ps.particles.empty()) {
    throw std::invalid_argument("particle set is empty");
  }
  RngStream root(seed);
  size_t m = ps.particles.size();
  std::vector<MarkovState> propagated;
  propagated.reserve(m);
  std::vector<double> weights(m, 0.0);
  for (size_t i = 0; i < m; ++i) {
    RngStream r = root.substream("prop", static_cast<uint64_t>(i));
    ExogenousDraw exo = draw_exogenous(env, r);
    MarkovState next =
        scm_transition(env, ps.particles[i], iv, exo, /*strict=*/false);
    weights[i] = observation_likelihood(env, next, iv, obs);
    propagated.push_back(std::move(next));
  }
  ParticleSet out;
  out.depletion_count = ps.depletion_count;
  double wmax = *std::max_element(weights.begin(), weights.end());
  double wmin = *std::min_element(weights.begin(), weights.end());
  if (wmax >= 1e-12 && wmax - wmin <= 1e-15 * wmax) {
    // The observation carries no information about the particles; resampling
    // would only inject noise, so the update is pure propagation.
    out.particles = std::move(propagated);
    return out;
  }
  if (wmax < 1e-12) {
    // Depletion: no particle explains the observation; keep the propagated
    // set with uniform weights so the filter stays alive, and count it.
    out.particles = std::move(propagated);
    out.depletion_count += 1;
    return out;
  }
  RngStream rs = root.substream("resample");
  out.particles.reserve(m);
  for (size_t i = 0; i < m; ++i) {
    out.particles.push_back(
        propagated[static_cast<size_t>(rs.categorical(weights))]);
  }
  return out;
}

std::vector<double> compromise_marginal(const ScmEnvironment& env,
                                        const ParticleSet& ps) {
  std::vector<double> p(static_cast<size_t>(env.node_count()), 0.0);
  if (ps.particles.empty()) return p;
  for (const MarkovState& s : ps.particles) {
    for (size_t i = 0; i < p.size(); ++i) {
      if (s.intrusion[i] == Intrusion::Compromised ||
          s.intrusion[i] == Intrusion::Root) {
        p[i] += 1.0;
      }
    }
  }
  for (double& v : p) v /= static_cast<double>(ps.particles.size());
  return p;
}

// --- Intervention pruning -----------------------------------------------------------

std::vector<Intervention> prune_interventions(
    const ScmEnvironment& env, const std::vector<double>& compromise_prob,
    const std::vector<uint32_t>& decoys, const PruneThresholds& thresholds,
    const std::vector<Intervention>& candidates) {
  if (static_cast<int>(compromise_prob.size()) != env.node_count() ||
      static_cast<int>(decoys.size()) != env.node_count()) {
    throw std::invalid_argument("belief summary has wrong dimension");
  }
  if (thresholds.low <= 0.0 && thresholds.high >= 1.0) return candidates;
  std::vector<Intervention> out;
  for (const Intervention& iv : candidates) {
    if (iv.type == InterventionType::None) {
      out.push_back(iv);
      continue;
    }
    size_t idx = static_cast<size_t>(iv.node);
    double p = compromise_prob[idx];
    bool keep = true;
    switch (iv.type) {
      case InterventionType::Decoy:
        if ((decoys[idx] >> iv.decoy) & 1u) keep = false;  // already running
        if (p > thresholds.high) keep = false;
        break;
      case InterventionType::Analyze:
        if (p > thresholds.high) keep = false;
        break;
      case InterventionType::Remove:
      case InterventionType::Restore:
        if (p < thresholds.low) keep = false;
        break;
      case InterventionType::None:
        break;
    }
    if (keep) out.push_back(iv);
  }
  return out;
}

// --- Tree-search planner -------------------------------------------------------------

double ucb_score(double mean, double parent_visits, int child_visits,
                 double c) {
  if (child_visits < 1) {
    throw std::invalid_argument("ucb_score requires a visited child");
  }
  return mean + c * std::sqrt(std::log(parent_visits) /
                              static_cast<double>(child_visits));
}

namespace {

struct ActionNode;

struct ObsNode {
  int visits = 0;
  bool expanded = false;
  std::vector<MarkovState> particles;
  std::vector<std::unique_ptr<ActionNode>> children;
};

struct ActionNode {
  Intervention action;
  int visits = 0;
  double mean = 0.0;
  std::map<std::string, std::unique_ptr<ObsNode>> children;
};

struct Search {
  const ScmEnvironment& env;
  const PomcpConfig& cfg;
  std::vector<Intervention> base_actions;
  int expanded_nodes = 0;

  Intervention base_action(const MarkovState& s) const {
    if (cfg.base_strategy) return cfg.base_strategy(s);
    return Intervention{};
  }

  double base_value(const MarkovState& s) const {
    return cfg.base_value ? cfg.base_value(s) : 0.0;
  }

  std::vector<double> node_compromise(const ObsNode& node,
                                      const MarkovState& s) const {
    std::vector<double> p(static_cast<size_t>(env.node_count()), 0.0);
    const std::vector<MarkovState>* src = &node.particles;
    std::vector<MarkovState> single;
    if (src->empty()) {
      single.push_back(s);
      src = &single;
    }
    for (const MarkovState& st : *src) {
      for (size_t i = 0; i < p.size(); ++i) {
        if (st.intrusion[i] == Intrusion::Compromised ||
            st.intrusion[i] == Intrusion::Root) {
          p[i] += 1.0;
        }
      }
    }
    for (double& v : p) v /= static_cast<double>(src->size());
    return p;
  }

  void expand(ObsNode& node, const MarkovState& s) {
    std::vector<Intervention> allowed = base_actions;
    if (cfg.pruning) {
      allowed = prune_interventions(env, node_compromise(node, s), s.decoys,
                                    cfg.thresholds, allowed);
      if (allowed.empty()) allowed.push_back(Intervention{});
    }
    for (const Intervention& iv : allowed) {
      auto child = std::make_unique<ActionNode>();
      child->action = iv;
      node.children.push_back(std::move(child));
    }
    expanded_nodes += static_cast<int>(allowed.size());
    node.expanded = true;
  }

  double rollout(MarkovState s, int depth, RngStream rng) {
    double total = 0.0;
    double disc = 1.0;
    for (int k = 0; k < cfg.rollout_depth && depth + k < cfg.max_depth; ++k) {
      Intervention iv = base_action(s);
      RngStream r = rng.substream("step", static_cast<uint64_t>(k));
      ExogenousDraw exo = draw_exogenous(env, r);
      s = scm_transition(env, s, iv, exo, /*strict=*/false);
      total += disc * (stage_reward(env, s) - intervention_cost(env, iv));
      disc *= env.discount;
    }
    return total + disc * base_value(s);
  }

  double simulate(ObsNode& node, const MarkovState& s, int depth,
                  RngStream rng) {
    if (depth >= cfg.max_depth) return 0.0;
    if (!node.expanded) {
      expand(node, s);
      node.visits += 1;
      return rollout(s, depth, rng.substream("rollout"));
    }
    // Tree policy: first unvisited child in canonical order, otherwise the
    // upper-confidence maximizer.
    ActionNode* pick = nullptr;
    for (auto& child : node.children) {
      if (child->visits == 0) {
        pick = child.get();
        break;
      }
    }
    if (pick == nullptr) {
      double best = -std::numeric_limits<double>::infinity();
      for (auto& child : node.children) {
        double score =
            ucb_score(child->mean, node.visits, child->visits, cfg.ucb_c);
        if (score > best) {
          best = score;
          pick = child.get();
        }
      }
    }
    RngStream r = rng.substream("exo");
    ExogenousDraw exo = draw_exogenous(env, r);
    MarkovState s2 = scm_transition(env, s, pick->action, exo,
                                    /*strict=*/false);
    ScmObservation obs =
        sample_observation(env, s2, pick->action, rng.substream("obs"));
    double reward =
        stage_reward(env, s2) - intervention_cost(env, pick->action);
    std::string key = observation_key(obs);
    auto it = pick->children.find(key);
    if (it == pick->children.end()) {
      it = pick->children.emplace(key, std::make_unique<ObsNode>()).first;
    }
    it->second->particles.push_back(s2);
    double value =
        reward + env.discount * simulate(*it->second, s2, depth + 1,
                                         rng.substream("next"));
    pick->visits += 1;
    pick->mean += (value - pick->mean) / static_cast<double>(pick->visits);
    node.visits += 1;
    return value;
  }
};

}  // namespace

PomcpResult pomcp_search(const ScmEnvironment& env, const ParticleSet& belief,
                         const PomcpConfig& cfg, uint64_t seed) {
  env.validate();
  if (cfg.iterations < 1) throw std::invalid_argument("budget must be >= 1");
  if (belief.particles.empty()) {
    throw std::invalid_argument("belief particle set is empty");
  }
  Search search{env, cfg,
                cfg.action_whitelist.empty() ? full_intervention_set(env)
                                             : cfg.action_whitelist,
                0};
  ObsNode root;
  root.particles = belief.particles;
  RngStream rng(seed);
  int m = static_cast<int>(belief.particles.size());
  for (int k = 0; k < cfg.iterations; ++k) {
    RngStream it = rng.substream("iter", static_cast<uint64_t>(k));
    const MarkovState& s = belief.particles[static_cast<size_t>(
        it.uniform_int(m))];
    search.simulate(root, s, 0, it.substream("sim"));
  }
  PomcpResult out;
  out.expanded_nodes = search.expanded_nodes;
  out.simulations = cfg.iterations;
  double best = -std::numeric_limits<double>::infinity();
  for (auto& child : root.children) {
    if (child->visits == 0) continue;
    if (child->mean > best) {
      best = child->mean;
      out.action = child->action;
      out.value = child->mean;
    }
  }
  return out;
}

// --- Episodes and regret --------------------------------------------------------------

EpisodeTrace run_episode(const ScmEnvironment& env, const EpisodeConfig& cfg,
                         uint64_t seed) {
  env.validate();
  if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  RngStream root(seed);
  std::vector<double> prior = env.attacker_prior;
  if (prior.empty()) {
    prior.assign(env.attackers.size(),
                 1.0 / static_cast<double>(env.attackers.size()));
  }
  MarkovState state = initial_state(env);
  state.attacker_id = root.substream("attacker").categorical(prior);
  ParticleSet belief = initial_particles(env, cfg.particles,
                                         root.substream("particles").next_u64());
  EpisodeTrace trace;
  double disc = 1.0;
  for (int t = 1; t <= cfg.horizon; ++t) {
    PomcpResult plan = pomcp_search(
        env, belief, cfg.planner,
        root.substream("plan", static_cast<uint64_t>(t)).next_u64());
    RngStream step_rng = root.substream("step", static_cast<uint64_t>(t));
    ExogenousDraw exo = draw_exogenous(env, step_rng);
    // The true state may not satisfy the planner's precondition guess, so the
    // executed intervention degrades to a no-op instead of failing.
    state = scm_transition(env, state, plan.action, exo, /*strict=*/false);
    ScmObservation obs =
        sample_observation(env, state, plan.action, step_rng.substream("obs"));
    double reward =
        stage_reward(env, state) - intervention_cost(env, plan.action);
    belief = particle_update(
        env, belief, plan.action, obs,
        root.substream("filter", static_cast<uint64_t>(t)).next_u64());
    EpisodeStep row;
    row.t = t;
    row.action = plan.action;
    row.obs = obs;
    row.reward = reward;
    row.depletions = belief.depletion_count;
    row.tree_size = plan.expanded_nodes;
    trace.steps.push_back(std::move(row));
    trace.value += disc * reward;
    disc *= env.discount;
  }
  return trace;
}

std::string episode_csv(const EpisodeTrace& trace) {
  std::ostringstream out;
  out << "t,intervention,observation,reward,depletions,tree_size\n";
  char buf[64];
  for (const EpisodeStep& s : trace.steps) {
    out << s.t << ',' << static_cast<int>(s.action.type) << ':'
        << s.action.node << ':' << s.action.decoy << ','
        << observation_key(s.obs);
    std::snprintf(buf, sizeof(buf), "%.17g", s.reward);
    out << ',' << buf << ',' << s.depletions << ',' << s.tree_size << '\n';
  }
  return out.str();
}

double episode_regret(const std::vector<double>& values, double reference) {
  double total = 0.0;
  for (double v : values) total += v;
  return static_cast<double>(values.size()) * reference - total;
}

}  // namespace resp
