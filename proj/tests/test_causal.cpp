#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "resp/causal.hpp"

using namespace resp;

namespace {

AttackerAutomaton fixed_attacker(AttackerAction a) {
  return [a](const ScmEnvironment&, const std::vector<Intrusion>&) {
    return a;
  };
}

ScmEnvironment two_node_env() {
  ScmEnvironment env;
  env.zone = {1, 2};
  env.workflow_edges = {{1, 0}};  // node 1 is a workflow parent of node 0
  env.decoy_count = 1;
  env.exploit_vuln = {0, 0};
  env.exploit_success = 1.0;
  env.arrival_dist = {1.0};
  env.departure_dist = {1.0};
  env.max_clients = 3;
  env.noise_base = 0.0;
  env.noise_per_client = 0.0;
  env.psi = {0.0, 0.0, 0.0, 10.0};
  env.beta_root = {0.0, 0.1, 1.0, 1.0};
  env.attackers = {fixed_attacker(AttackerAction{})};
  env.attack_path = {0, 1};
  return env;
}

MarkovState state_with(const ScmEnvironment& env,
                       std::vector<Intrusion> intrusion) {
  MarkovState s = initial_state(env);
  s.intrusion = std::move(intrusion);
  return s;
}

// Upper 1% quantile of the chi-square distribution (Wilson-Hilferty).
double chi2_crit99(int df) {
  double z = 2.3263478740408408;
  double a = 2.0 / (9.0 * df);
  double v = 1.0 - a + z * std::sqrt(a);
  return df * v * v * v;
}

}  // namespace

TEST_CASE("intrusion state transitions cover every case") {
  ScmEnvironment env = two_node_env();

  // Independent re-derivation of the per-node transition rule for node 0
  // (zone 1, workflow child of node 1).
  auto expected = [&](Intrusion cur, const AttackerAction& a, bool decoy,
                      bool e, bool workflow_on) {
    if (a.type == AttackType::Discover && a.zone == 1 &&
        cur == Intrusion::Unknown) {
      return Intrusion::Known;
    }
    if (workflow_on && a.type == AttackType::Escalate && a.node == 1 &&
        cur == Intrusion::Unknown) {
      return Intrusion::Known;
    }
    if (a.type == AttackType::Scan && a.node == 0 && cur == Intrusion::Known) {
      return Intrusion::Scanned;
    }
    if (a.type == AttackType::Exploit && a.node == 0 && !a.root && !decoy &&
        e && cur == Intrusion::Scanned) {
      return Intrusion::Compromised;
    }
    if (a.type == AttackType::Exploit && a.node == 0 && a.root && !decoy &&
        e && cur == Intrusion::Scanned) {
      return Intrusion::Root;
    }
    if (a.type == AttackType::Escalate && a.node == 0 &&
        cur == Intrusion::Compromised) {
      return Intrusion::Root;
    }
    return cur;
  };

  std::vector<AttackerAction> actions;
  actions.push_back(AttackerAction{});
  actions.push_back({AttackType::Discover, -1, 1, 0, false});
  actions.push_back({AttackType::Discover, -1, 2, 0, false});
  actions.push_back({AttackType::Scan, 0, -1, 0, false});
  actions.push_back({AttackType::Scan, 1, -1, 0, false});
  actions.push_back({AttackType::Exploit, 0, -1, 0, false});
  actions.push_back({AttackType::Exploit, 0, -1, 0, true});
  actions.push_back({AttackType::Exploit, 1, -1, 0, false});
  actions.push_back({AttackType::Escalate, 0, -1, 0, false});
  actions.push_back({AttackType::Escalate, 1, -1, 0, false});
  actions.push_back({AttackType::Impact, 0, -1, 0, false});

  for (bool workflow_on : {true, false}) {
    env.workflow_discovery = workflow_on;
    for (const AttackerAction& a : actions) {
      env.attackers = {fixed_attacker(a)};
      for (int cur = 0; cur < 5; ++cur) {
        for (bool decoy : {false, true}) {
          for (bool e : {false, true}) {
            MarkovState s = state_with(
                env, {static_cast<Intrusion>(cur), Intrusion::Compromised});
            s.decoys[0] = decoy ? 1u : 0u;
            ExogenousDraw exo{e, 0, 0};
            MarkovState next =
                scm_transition(env, s, Intervention{}, exo, true);
            CHECK(next.intrusion[0] ==
                  expected(static_cast<Intrusion>(cur), a, decoy, e,
                           workflow_on));
          }
        }
      }
    }
  }
}

TEST_CASE("rewards, service impact, and intervention semantics") {
  ScmEnvironment env = two_node_env();

  SUBCASE("healthy serving system has zero reward") {
    CHECK(stage_reward(env, initial_state(env)) == 0.0);
  }

  SUBCASE("rooted node in a unit-cost zone costs one per step") {
    MarkovState s = state_with(env, {Intrusion::Unknown, Intrusion::Root});
    CHECK(stage_reward(env, s) == -1.0);  // zone 2 root cost
  }

  SUBCASE("downtime in the expensive zone costs ten") {
    ScmEnvironment e3 = two_node_env();
    e3.zone = {1, 3};
    MarkovState s = initial_state(e3);
    s.service[1] = 0;
    CHECK(stage_reward(e3, s) == -10.0);
  }

  SUBCASE("impact stops the targeted service only") {
    env.attackers = {fixed_attacker({AttackType::Impact, 1, -1, 0, false})};
    StepResult r = scm_step(env, initial_state(env), Intervention{}, 3);
    CHECK(r.state.service[0] == 1);
    CHECK(r.state.service[1] == 0);
  }

  SUBCASE("restore clears decoys and resets the intrusion state") {
    MarkovState s = state_with(env, {Intrusion::Root, Intrusion::Unknown});
    s.decoys[0] = 1u;
    StepResult r = scm_step(env, s, {InterventionType::Restore, 0, -1}, 5);
    CHECK(r.state.intrusion[0] == Intrusion::Scanned);
    CHECK(r.state.decoys[0] == 0u);
    CHECK(intervention_cost(env, {InterventionType::Restore, 0, -1}) == 1.0);
  }

  SUBCASE("remove requires a compromised node") {
    MarkovState s = state_with(env, {Intrusion::Compromised, Intrusion::Unknown});
    StepResult ok = scm_step(env, s, {InterventionType::Remove, 0, -1}, 7);
    CHECK(ok.state.intrusion[0] == Intrusion::Scanned);
    CHECK_THROWS_AS(
        scm_step(env, initial_state(env), {InterventionType::Remove, 0, -1}, 7),
        InterventionError);
    CHECK_THROWS_AS(
        scm_step(env, initial_state(env), {InterventionType::Restore, 0, -1},
                 7),
        InterventionError);
  }

  SUBCASE("decoy start is recorded and blocks the matching exploit") {
    env.attackers = {fixed_attacker({AttackType::Exploit, 0, -1, 0, false})};
    MarkovState s = state_with(env, {Intrusion::Scanned, Intrusion::Unknown});
    StepResult blocked =
        scm_step(env, s, {InterventionType::Decoy, 0, 0}, 11);
    CHECK(blocked.state.decoys[0] == 1u);
    CHECK(blocked.state.intrusion[0] == Intrusion::Scanned);
    StepResult open = scm_step(env, s, Intervention{}, 11);
    CHECK(open.state.intrusion[0] == Intrusion::Compromised);
  }

  SUBCASE("analyze reveals the node's state exactly") {
    ScmEnvironment noisy = two_node_env();
    noisy.noise_base = 0.5;
    noisy.attackers = {fixed_attacker(AttackerAction{})};
    MarkovState s = state_with(noisy, {Intrusion::Root, Intrusion::Root});
    int mismatch_analyzed = 0;
    int mismatch_plain = 0;
    for (uint64_t k = 0; k < 200; ++k) {
      StepResult r = scm_step(noisy, s, {InterventionType::Analyze, 0, -1}, k);
      if (r.obs.activity[0] != static_cast<int>(Intrusion::Root)) {
        ++mismatch_analyzed;
      }
      if (r.obs.activity[1] != static_cast<int>(Intrusion::Root)) {
        ++mismatch_plain;
      }
    }
    CHECK(mismatch_analyzed == 0);
    CHECK(mismatch_plain > 0);
  }
}

TEST_CASE("client dynamics stay within bounds") {
  ScmEnvironment env = two_node_env();
  MarkovState s = initial_state(env);
  // Adversarial departure stream: departures always exceed arrivals.
  for (int t = 0; t < 20; ++t) {
    ExogenousDraw exo{false, t % 2, 3};
    s = scm_transition(env, s, Intervention{}, exo, true);
    CHECK(s.clients >= 0);
    CHECK(s.clients <= env.max_clients);
  }
  // Saturation at the cap.
  for (int t = 0; t < 10; ++t) {
    ExogenousDraw exo{false, 3, 0};
    s = scm_transition(env, s, Intervention{}, exo, true);
  }
  CHECK(s.clients == env.max_clients);
}

TEST_CASE("planner state is Markov") {
  ScmEnvironment env = ScmEnvironment::example(2);
  env.noise_base = 0.2;

  // Two different exogenous histories that land in the same planner state.
  MarkovState a = initial_state(env);
  a = scm_transition(env, a, Intervention{}, {true, 1, 0}, true);
  a = scm_transition(env, a, Intervention{}, {true, 0, 1}, true);
  MarkovState b = initial_state(env);
  b = scm_transition(env, b, Intervention{}, {true, 0, 0}, true);
  b = scm_transition(env, b, Intervention{}, {true, 0, 0}, true);
  REQUIRE(markov_key(a) == markov_key(b));

  const int samples = 10000;
  std::map<std::string, std::array<int, 2>> counts;
  for (int k = 0; k < samples; ++k) {
    StepResult ra = scm_step(env, a, Intervention{}, 1000 + k);
    StepResult rb = scm_step(env, b, Intervention{}, 900000 + k);
    counts[markov_key(ra.state)][0] += 1;
    counts[markov_key(rb.state)][1] += 1;
  }
  // Chi-square homogeneity across the two histories.
  double stat = 0.0;
  int cells = 0;
  for (const auto& [key, c] : counts) {
    double row = c[0] + c[1];
    for (int g = 0; g < 2; ++g) {
      double expect = row * 0.5;
      double diff = c[g] - expect;
      stat += diff * diff / expect;
    }
    ++cells;
  }
  REQUIRE(cells >= 2);
  CHECK(stat < chi2_crit99(cells - 1));
}

TEST_CASE("shipped attacker automata") {
  SUBCASE("shortest-path attacker walks the path then impacts") {
    ScmEnvironment env = ScmEnvironment::example(2);
    MarkovState s = initial_state(env);
    std::vector<AttackType> seen;
    for (int t = 0; t < 12; ++t) {
      AttackerAction a = attacker_action(env, s);
      seen.push_back(a.type);
      s = scm_transition(env, s, Intervention{}, {true, 0, 0}, true);
    }
    // Escalating node 0 reveals its workflow child, so the second discover
    // is skipped.
    std::vector<AttackType> want = {
        AttackType::Discover, AttackType::Scan,    AttackType::Exploit,
        AttackType::Escalate, AttackType::Scan,    AttackType::Exploit,
        AttackType::Escalate, AttackType::Impact};
    for (size_t i = 0; i < want.size(); ++i) CHECK(seen[i] == want[i]);
    // Workflow discovery short-circuits the second discover when the rooted
    // node is a workflow parent.
    ScmEnvironment linked = ScmEnvironment::example(2);
    MarkovState s2 = initial_state(linked);
    for (int t = 0; t < 4; ++t) {
      s2 = scm_transition(linked, s2, Intervention{}, {true, 0, 0}, true);
    }
    CHECK(s2.intrusion[0] == Intrusion::Root);
    CHECK(s2.intrusion[1] == Intrusion::Known);  // revealed by escalation
  }

  SUBCASE("breadth attacker clears a zone before moving on") {
    ScmEnvironment env = ScmEnvironment::example(3);
    env.zone = {1, 1, 2};
    env.attackers = {meander_attacker()};
    env.workflow_edges.clear();
    MarkovState s = initial_state(env);
    bool zone2_touched_early = false;
    for (int t = 0; t < 8; ++t) {
      AttackerAction a = attacker_action(env, s);
      bool zone1_done = s.intrusion[0] == Intrusion::Root &&
                        s.intrusion[1] == Intrusion::Root;
      if (!zone1_done &&
          ((a.node == 2) || (a.type == AttackType::Discover && a.zone == 2))) {
        zone2_touched_early = true;
      }
      s = scm_transition(env, s, Intervention{}, {true, 0, 0}, true);
    }
    CHECK_FALSE(zone2_touched_early);
    CHECK(s.intrusion[0] == Intrusion::Root);
    CHECK(s.intrusion[1] == Intrusion::Root);
  }
}

TEST_CASE("particle filter") {
  SUBCASE("exact observations leave only consistent particles") {
    ScmEnvironment env = ScmEnvironment::example(2);
    env.noise_base = 0.0;
    env.noise_per_client = 0.0;
    ParticleSet ps = initial_particles(env, 2000, 1);
    MarkovState truth = initial_state(env);
    Intervention iv;
    for (int t = 1; t <= 4; ++t) {
      StepResult r = scm_step(env, truth, iv, 100 + t);
      truth = r.state;
      ps = particle_update(env, ps, iv, r.obs, 200 + t);
      for (const MarkovState& p : ps.particles) {
        for (size_t i = 0; i < p.intrusion.size(); ++i) {
          CHECK(static_cast<int>(p.intrusion[i]) == r.obs.activity[i]);
        }
        CHECK(p.clients == r.obs.clients);
      }
    }
    CHECK(ps.depletion_count == 0);
  }

  SUBCASE("empirical belief approaches the exact filter") {
    ScmEnvironment env = ScmEnvironment::example(2);
    env.noise_base = 0.2;
    env.noise_per_client = 0.0;
    env.arrival_dist = {0.6, 0.4};
    env.departure_dist = {0.7, 0.3};
    const int m = 5000;
    ParticleSet ps = initial_particles(env, m, 3);

    // Exact Bayes filter by enumeration over states and exogenous draws.
    std::map<std::string, std::pair<MarkovState, double>> exact;
    MarkovState s0 = initial_state(env);
    exact[markov_key(s0)] = {s0, 1.0};

    MarkovState truth = s0;
    Intervention iv;
    for (int t = 1; t <= 3; ++t) {
      StepResult r = scm_step(env, truth, iv, 5000 + t);
      truth = r.state;

      std::map<std::string, std::pair<MarkovState, double>> next;
      for (const auto& [key, entry] : exact) {
        for (int eo = 0; eo < 2; ++eo) {
          double pe = eo ? env.exploit_success : 1.0 - env.exploit_success;
          for (size_t ar = 0; ar < env.arrival_dist.size(); ++ar) {
            for (size_t de = 0; de < env.departure_dist.size(); ++de) {
              double p = entry.second * pe * env.arrival_dist[ar] *
                         env.departure_dist[de];
              if (p <= 0.0) continue;
              MarkovState nxt = scm_transition(
                  env, entry.first, iv,
                  {eo == 1, static_cast<int>(ar), static_cast<int>(de)},
                  false);
              double w = observation_likelihood(env, nxt, iv, r.obs);
              if (w <= 0.0) continue;
              auto& slot = next[markov_key(nxt)];
              slot.first = nxt;
              slot.second += p * w;
            }
          }
        }
      }
      double total = 0.0;
      for (const auto& [key, entry] : next) total += entry.second;
      REQUIRE(total > 0.0);
      for (auto& [key, entry] : next) entry.second /= total;
      exact = std::move(next);

      ps = particle_update(env, ps, iv, r.obs, 7000 + t);
    }

    std::map<std::string, double> empirical;
    for (const MarkovState& p : ps.particles) {
      empirical[markov_key(p)] += 1.0 / static_cast<double>(m);
    }
    std::set<std::string> keys;
    for (const auto& [k, v] : exact) keys.insert(k);
    for (const auto& [k, v] : empirical) keys.insert(k);
    double tv = 0.0;
    for (const std::string& k : keys) {
      double a = exact.count(k) ? exact.at(k).second : 0.0;
      double b = empirical.count(k) ? empirical.at(k) : 0.0;
      tv += std::abs(a - b);
    }
    tv *= 0.5;
    CHECK(tv <= 0.05);
  }

  SUBCASE("uninformative observations reduce to pure propagation") {
    ScmEnvironment env = two_node_env();
    env.noise_base = 0.8;  // alarm correct w.p. 0.2 = 0.8/4: flat likelihood
    env.noise_cap = 0.8;
    env.exploit_success = 0.5;
    env.attackers = {bline_attacker()};
    ParticleSet ps = initial_particles(env, 500, 9);
    // Advance the truth one step and observe.
    StepResult r = scm_step(env, initial_state(env), Intervention{}, 17);
    ParticleSet out = particle_update(env, ps, Intervention{}, r.obs, 33);
    // Reproduce the propagation exactly: same substreams, no resampling.
    REQUIRE(out.particles.size() == ps.particles.size());
    RngStream root(33);
    for (size_t i = 0; i < ps.particles.size(); ++i) {
      RngStream rr = root.substream("prop", static_cast<uint64_t>(i));
      ExogenousDraw exo;
      exo.exploit_ok = rr.bernoulli(env.exploit_success);
      exo.arrivals = rr.categorical(env.arrival_dist);
      exo.departures = rr.categorical(env.departure_dist);
      MarkovState want =
          scm_transition(env, ps.particles[i], Intervention{}, exo, false);
      CHECK(markov_key(out.particles[i]) == markov_key(want));
    }
    CHECK(out.depletion_count == 0);
  }

  SUBCASE("depletion falls back to propagation and is counted") {
    ScmEnvironment env = two_node_env();
    env.noise_base = 0.0;
    env.attackers = {fixed_attacker(AttackerAction{})};
    ParticleSet ps = initial_particles(env, 50, 2);
    // Fabricate an impossible observation: clients beyond reach in one step.
    ScmObservation obs;
    obs.activity = {0, 0};
    obs.decoys = {0u, 0u};
    obs.service = {1, 1};
    obs.clients = 3;  // arrivals pmf is degenerate at 0
    ParticleSet out = particle_update(env, ps, Intervention{}, obs, 4);
    CHECK(out.depletion_count == 1);
    CHECK(out.particles.size() == ps.particles.size());
  }
}

TEST_CASE("intervention pruning") {
  ScmEnvironment env = ScmEnvironment::example(3);
  env.decoy_count = 2;
  env.exploit_vuln = {0, 0, 0};
  std::vector<Intervention> full = full_intervention_set(env);
  PruneThresholds th{0.5, 0.5};

  SUBCASE("running decoys are not restarted") {
    std::vector<uint32_t> decoys = {1u, 0u, 0u};
    auto out = prune_interventions(env, {0.0, 0.0, 0.0}, decoys, th, full);
    for (const Intervention& iv : out) {
      CHECK_FALSE(iv == Intervention{InterventionType::Decoy, 0, 0});
    }
    bool other_decoy = false;
    for (const Intervention& iv : out) {
      if (iv == Intervention{InterventionType::Decoy, 0, 1}) other_decoy = true;
    }
    CHECK(other_decoy);
  }

  SUBCASE("recovery is dropped on likely-clean nodes") {
    auto out = prune_interventions(env, {0.0, 0.9, 0.0}, {0u, 0u, 0u}, th,
                                   full);
    for (const Intervention& iv : out) {
      if (iv.node == 0 || iv.node == 2) {
        CHECK(iv.type != InterventionType::Remove);
        CHECK(iv.type != InterventionType::Restore);
      }
      if (iv.node == 1) {
        CHECK(iv.type != InterventionType::Analyze);
        CHECK(iv.type != InterventionType::Decoy);
      }
    }
    bool has_restore_1 = false;
    for (const Intervention& iv : out) {
      if (iv == Intervention{InterventionType::Restore, 1, -1}) {
        has_restore_1 = true;
      }
    }
    CHECK(has_restore_1);
  }

  SUBCASE("thresholds zero and one disable pruning") {
    auto out = prune_interventions(env, {0.9, 0.9, 0.9}, {3u, 3u, 3u},
                                   PruneThresholds{0.0, 1.0}, full);
    CHECK(out == full);
  }

  SUBCASE("pruned set is always a subset") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      RngStream rng(seed);
      std::vector<double> p = {rng.uniform(), rng.uniform(), rng.uniform()};
      std::vector<uint32_t> d = {
          static_cast<uint32_t>(rng.uniform_int(4)),
          static_cast<uint32_t>(rng.uniform_int(4)),
          static_cast<uint32_t>(rng.uniform_int(4))};
      auto out = prune_interventions(env, p, d, th, full);
      for (const Intervention& iv : out) {
        CHECK(std::find(full.begin(), full.end(), iv) != full.end());
      }
      CHECK(out.size() <= full.size());
    }
  }
}

namespace {

// Deterministic single-node toy for the planner oracle.
ScmEnvironment planner_toy() {
  ScmEnvironment env;
  env.zone = {3};
  env.decoy_count = 0;
  env.exploit_vuln = {0};
  env.exploit_success = 1.0;
  env.arrival_dist = {1.0};
  env.departure_dist = {1.0};
  env.max_clients = 0;
  env.noise_base = 0.0;
  env.noise_per_client = 0.0;
  env.psi = {0.0, 0.0, 0.0, 10.0};
  env.beta_root = {0.0, 0.1, 1.0, 1.0};
  env.discount = 0.95;
  env.attackers = {bline_attacker()};
  env.attack_path = {0};
  return env;
}

// Exhaustive expectimax over the deterministic toy.
double toy_expectimax(const ScmEnvironment& env,
                      const std::vector<Intervention>& actions,
                      const MarkovState& s, int depth, int max_depth,
                      int* best_index) {
  if (depth >= max_depth) return 0.0;
  double best = -1e300;
  int best_i = 0;
  for (size_t i = 0; i < actions.size(); ++i) {
    MarkovState next = scm_transition(env, s, actions[i], {true, 0, 0}, false);
    double v = stage_reward(env, next) - intervention_cost(env, actions[i]) +
               env.discount * toy_expectimax(env, actions, next, depth + 1,
                                             max_depth, nullptr);
    if (v > best + 1e-12) {
      best = v;
      best_i = static_cast<int>(i);
    }
  }
  if (best_index != nullptr) *best_index = best_i;
  return best;
}

}  // namespace

TEST_CASE("tree search planner") {
  SUBCASE("upper confidence bound arithmetic") {
    CHECK(ucb_score(0.0, std::exp(1.0), 1, 0.5) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ucb_score(-2.0, std::exp(1.0), 4, 1.0) ==
          doctest::Approx(-1.5).epsilon(1e-12));
  }

  SUBCASE("matches exhaustive search on the deterministic toy") {
    ScmEnvironment env = planner_toy();
    std::vector<Intervention> actions = {
        Intervention{}, Intervention{InterventionType::Restore, 0, -1}};
    MarkovState rooted = initial_state(env);
    rooted.intrusion[0] = Intrusion::Root;

    int oracle_index = -1;
    toy_expectimax(env, actions, rooted, 0, 2, &oracle_index);
    REQUIRE(oracle_index == 1);  // restore is the oracle optimum

    ParticleSet belief;
    belief.particles.assign(200, rooted);

    PomcpConfig cfg;
    cfg.ucb_c = 5.0;
    cfg.rollout_depth = 2;
    cfg.max_depth = 2;
    cfg.pruning = false;
    cfg.action_whitelist = actions;

    std::vector<int> tiers = {1, 8, 50, 200};
    std::vector<int> successes;
    for (int budget : tiers) {
      cfg.iterations = budget;
      int wins = 0;
      for (uint64_t seed = 0; seed < 20; ++seed) {
        PomcpResult r = pomcp_search(env, belief, cfg, seed);
        if (r.action == actions[static_cast<size_t>(oracle_index)]) ++wins;
      }
      successes.push_back(wins);
    }
    for (size_t i = 0; i + 1 < successes.size(); ++i) {
      CHECK(successes[i] <= successes[i + 1]);
    }
    CHECK(successes.back() == 20);
  }

  SUBCASE("disabled thresholds reproduce the unpruned planner") {
    ScmEnvironment env = ScmEnvironment::example(2);
    ParticleSet belief = initial_particles(env, 100, 5);
    PomcpConfig pruned;
    pruned.iterations = 80;
    pruned.pruning = true;
    pruned.thresholds = {0.0, 1.0};
    PomcpConfig plain = pruned;
    plain.pruning = false;
    for (uint64_t seed = 0; seed < 5; ++seed) {
      PomcpResult a = pomcp_search(env, belief, pruned, seed);
      PomcpResult b = pomcp_search(env, belief, plain, seed);
      CHECK(a.action == b.action);
      CHECK(a.value == b.value);
      CHECK(a.expanded_nodes == b.expanded_nodes);
    }
  }

  SUBCASE("pruning shrinks the tree by the predicted factor") {
    // Static environment: the attacker idles, every intervention is a no-op
    // (all decoys already run, nothing is compromised), so the allowed set
    // has constant size everywhere in the tree.
    ScmEnvironment env;
    env.zone = {2, 2, 2};
    env.decoy_count = 4;
    env.exploit_vuln = {0, 0, 0};
    env.arrival_dist = {1.0};
    env.departure_dist = {1.0};
    env.max_clients = 0;
    env.noise_base = 0.3;
    env.psi = {0.0, 0.0, 0.0, 10.0};
    env.beta_root = {0.0, 0.1, 1.0, 1.0};
    env.attackers = {fixed_attacker(AttackerAction{})};
    env.attack_path = {0};

    MarkovState s = initial_state(env);
    for (auto& d : s.decoys) d = 0xFu;  // all four decoys running
    ParticleSet belief;
    belief.particles.assign(100, s);

    size_t full = full_intervention_set(env).size();
    // Pruned set: none + one analyze per node (decoys run, nothing
    // compromised so remove/restore are dropped).
    size_t allowed = 1 + 3;
    double factor =
        static_cast<double>(allowed) / static_cast<double>(full);
    REQUIRE(factor <= 0.25);  // at least ~80% of interventions prunable

    PomcpConfig on;
    on.iterations = 300;
    on.pruning = true;
    PomcpConfig off = on;
    off.pruning = false;
    PomcpResult a = pomcp_search(env, belief, on, 42);
    PomcpResult b = pomcp_search(env, belief, off, 42);
    double ratio = static_cast<double>(a.expanded_nodes) /
                   static_cast<double>(b.expanded_nodes);
    CHECK(ratio == doctest::Approx(factor).epsilon(0.10));
  }
}

TEST_CASE("episodes and regret") {
  SUBCASE("regret arithmetic") {
    CHECK(episode_regret({-3.0, -3.0, -3.0}, -3.0) == 0.0);
    // Constant suboptimality gap g per minute over n minutes.
    CHECK(episode_regret({-3.5, -3.5, -3.5, -3.5}, -3.0) ==
          doctest::Approx(4.0 * 0.5).epsilon(1e-12));
  }

  SUBCASE("identical configs reproduce byte-identical traces") {
    ScmEnvironment env = ScmEnvironment::example(2);
    EpisodeConfig cfg;
    cfg.planner.iterations = 20;
    cfg.particles = 50;
    cfg.horizon = 5;
    EpisodeTrace a = run_episode(env, cfg, 77);
    EpisodeTrace b = run_episode(env, cfg, 77);
    CHECK(episode_csv(a) == episode_csv(b));
    EpisodeTrace c = run_episode(env, cfg, 78);
    CHECK(episode_csv(a) != episode_csv(c));
    CHECK(a.steps.size() == 5);
  }

  SUBCASE("causal pruning does not hurt at equal budgets") {
    ScmEnvironment env = ScmEnvironment::example(2);
    env.decoy_count = 3;
    env.exploit_vuln = {0, 0};
    EpisodeConfig on;
    on.planner.iterations = 30;
    on.planner.pruning = true;
    on.particles = 200;
    on.horizon = 6;
    EpisodeConfig off = on;
    off.planner.pruning = false;
    std::vector<double> v_on, v_off;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      v_on.push_back(run_episode(env, on, seed).value);
      v_off.push_back(run_episode(env, off, seed).value);
    }
    double r_on = episode_regret(v_on, 0.0);
    double r_off = episode_regret(v_off, 0.0);
    CHECK(r_on <= r_off);
  }
}
