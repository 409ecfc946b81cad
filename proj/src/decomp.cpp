#include "resp/decomp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <stdexcept>

#include "resp/stopping.hpp"  // beta_binomial_pmf

namespace resp {

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

}  // namespace

void InfraGraph::validate() const {
  if (node_count < 1)
    throw std::invalid_argument("graph: at least one regular node required");
  if (static_cast<int>(parent.size()) != node_count + 1 ||
      static_cast<int>(workflow.size()) != node_count + 1 ||
      static_cast<int>(zone.size()) != node_count + 1)
    throw std::invalid_argument("graph: per-node arrays must cover 0..n");
  if (parent[0] != -1)
    throw std::invalid_argument("graph: the gateway is the root");
  if (zone_count < 1 || shutdown_zone < 0 || shutdown_zone >= zone_count ||
      redirect_zone < 0 || redirect_zone >= zone_count ||
      shutdown_zone == redirect_zone)
    throw std::invalid_argument("graph: invalid special zones");
  for (int i = 1; i <= node_count; ++i) {
    if (parent[i] < 0 || parent[i] > node_count || parent[i] == i)
      throw std::invalid_argument("graph: parent out of range");
    if (workflow[i] < 0 || workflow[i] >= workflow_count)
      throw std::invalid_argument("graph: workflow id out of range");
    if (zone[i] < 0 || zone[i] >= zone_count)
      throw std::invalid_argument("graph: zone out of range");
    // walk to the root; bounded steps rule out cycles
    int cur = i;
    int steps = 0;
    while (cur != 0) {
      cur = parent[cur];
      if (++steps > node_count)
        throw std::invalid_argument("graph: parent links contain a cycle");
    }
    // workflows are subtrees: a node shares its workflow with its parent
    // unless the parent is the gateway
    if (parent[i] != 0 && workflow[parent[i]] != workflow[i])
      throw std::invalid_argument(
          "graph: workflows must be subtrees meeting only at the gateway");
  }
  std::vector<bool> seen(static_cast<size_t>(workflow_count), false);
  for (int i = 1; i <= node_count; ++i) seen[static_cast<size_t>(workflow[i])] = true;
  for (bool s : seen)
    if (!s) throw std::invalid_argument("graph: empty workflow");
}

int InfraGraph::ancestor_count(int i) const {
  if (i < 1 || i > node_count)
    throw std::invalid_argument("graph: node id out of range");
  int count = 1;  // the node itself
  int cur = i;
  while (cur != 0) {
    cur = parent[cur];
    ++count;  // ancestors up to and including the gateway
  }
  return count;
}

InfraGraph InfraGraph::example_six() {
  InfraGraph g;
  g.node_count = 6;
  g.parent = {-1, 0, 1, 2, 0, 4, 5};
  g.workflow = {0, 0, 0, 0, 1, 1, 1};
  g.workflow_count = 2;
  g.zone = {0, 0, 0, 0, 0, 0, 0};
  return g;
}

InfraGraph InfraGraph::single_node() {
  InfraGraph g;
  g.node_count = 1;
  g.parent = {-1, 0};
  g.workflow = {0, 0};
  g.workflow_count = 1;
  g.zone = {0, 0};
  return g;
}

void LocalDynamics::validate(int zone_count) const {
  for (double p : {p_recon, p_bruteforce, p_exploit})
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("dynamics: probabilities must lie in [0,1]");
  if (eta < 0.0 || k <= 0.0)
    throw std::invalid_argument("dynamics: eta >= 0 and k > 0 required");
  if (discount < 0.0 || discount >= 1.0)
    throw std::invalid_argument("dynamics: discount must lie in [0,1)");
  if (static_cast<int>(action_costs.size()) != defender_actions(zone_count))
    throw std::invalid_argument("dynamics: one cost per defender action");
  if (action_costs[0] != 0.0)
    throw std::invalid_argument("dynamics: the null action costs nothing");
  for (double c : action_costs)
    if (c < 0.0) throw std::invalid_argument("dynamics: costs are nonnegative");
  if (obs.size() != kAttackStates)
    throw std::invalid_argument("dynamics: one observation row per state");
  size_t n = obs[0].size();
  for (const auto& row : obs) {
    if (row.size() != n || n == 0)
      throw std::invalid_argument("dynamics: ragged observation rows");
    double total = 0.0;
    for (double v : row) {
      if (v < 0.0) throw std::invalid_argument("dynamics: negative obs mass");
      total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9)
      throw std::invalid_argument("dynamics: observation row must sum to 1");
  }
}

LocalDynamics LocalDynamics::defaults(int zone_count) {
  LocalDynamics d;
  d.action_costs.assign(static_cast<size_t>(zone_count) + 2, 1.0);
  d.action_costs[0] = 0.0;
  d.obs = {beta_binomial_pmf(10, 0.7, 3.0), beta_binomial_pmf(10, 1.0, 1.0),
           beta_binomial_pmf(10, 1.0, 0.7)};
  return d;
}

LocalAttackerTable static_attacker_table() {
  LocalAttackerTable t{};
  t[0] = {0.8, 0.2, 0.0, 0.0};
  t[1] = {0.7, 0.0, 0.15, 0.15};
  t[2] = {1.0, 0.0, 0.0, 0.0};
  return t;
}

LocalAttackerTable passive_attacker_table() {
  LocalAttackerTable t{};
  t[0] = {1.0, 0.0, 0.0, 0.0};
  t[1] = {1.0, 0.0, 0.0, 0.0};
  t[2] = {1.0, 0.0, 0.0, 0.0};
  return t;
}

std::vector<NodeSubgame> decompose(const InfraGraph& graph,
                                   const LocalDynamics& dyn) {
  graph.validate();
  dyn.validate(graph.zone_count);
  std::vector<NodeSubgame> subs;
  for (int i = 1; i <= graph.node_count; ++i) {
    NodeSubgame s;
    s.node = i;
    s.workflow = graph.workflow[i];
    s.ancestor_count = graph.ancestor_count(i);
    s.initial_zone = graph.zone[i];
    s.zone_count = graph.zone_count;
    s.shutdown_zone = graph.shutdown_zone;
    s.redirect_zone = graph.redirect_zone;
    s.dyn = dyn;
    subs.push_back(std::move(s));
  }
  return subs;
}

double node_utility(int active_ancestors, int active, int intrusion,
                    int a_def, const std::vector<double>& action_costs,
                    double eta, double k) {
  return eta * k * active_ancestors * active - intrusion -
         action_costs.at(static_cast<size_t>(a_def));
}

std::array<double, kAttackStates> attack_transition(
    const LocalDynamics& dyn, int s, int a_att, bool defensive) {
  std::array<double, kAttackStates> row{0.0, 0.0, 0.0};
  if (defensive) {
    row[0] = 1.0;
    return row;
  }
  if (s == 0) {
    if (a_att == 1) {
      row[1] = dyn.p_recon;
      row[0] = 1.0 - dyn.p_recon;
    } else {
      row[0] = 1.0;
    }
  } else if (s == 1) {
    double q = a_att == 2 ? dyn.p_bruteforce : a_att == 3 ? dyn.p_exploit : 0.0;
    row[2] = q;
    row[1] = 1.0 - q;
  } else {
    row[2] = 1.0;
  }
  return row;
}

std::array<std::array<double, 3>, 3> stopping_matrix_continue(double p,
                                                              double q) {
  return {{{1 - p, p, 0.0}, {0.0, 1 - q, q}, {0.0, 0.0, 1.0}}};
}

std::array<std::array<double, 3>, 3> stopping_matrix_stop() {
  return {{{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}};
}

double recon_probability(const LocalDynamics& dyn,
                         const LocalAttackerTable& att) {
  return att[0][1] * dyn.p_recon;
}

double compromise_probability(const LocalDynamics& dyn,
                              const LocalAttackerTable& att) {
  return att[1][2] * dyn.p_bruteforce + att[1][3] * dyn.p_exploit;
}

void SwitchingCurvePolicy::validate() const {
  if (theta1 < 1.0 || theta2 <= 0.0)
    throw std::invalid_argument(
        "switching curve: theta1 >= 1 and theta2 > 0 required");
}

SwitchingCurvePolicy SwitchingCurvePolicy::from_unconstrained(double x1,
                                                              double x2) {
  SwitchingCurvePolicy c;
  c.theta1 = 1.0 + softplus(x1);
  c.theta2 = softplus(x2);
  return c;
}

namespace {

// Zone after a defender action: migration moves, everything else stays.
int next_zone(int zone, int a_def, int zone_count) {
  if (a_def >= 1 && a_def <= zone_count) return a_def - 1;
  return zone;
}

}  // namespace

FinitePomdp build_node_stopping_pomdp(const NodeSubgame& sub,
                                      const LocalAttackerTable& att,
                                      const std::vector<int>& zone_action) {
  const LocalDynamics& dyn = sub.dyn;
  double p = recon_probability(dyn, att);
  double q = compromise_probability(dyn, att);
  auto cont = stopping_matrix_continue(p, q);
  auto stop = stopping_matrix_stop();

  int z0 = sub.initial_zone;
  int a_stop = zone_action.at(static_cast<size_t>(z0));
  int z_after = next_zone(z0, a_stop, sub.zone_count);

  FinitePomdp pomdp;
  pomdp.base = FiniteMdp::zeros(kAttackStates, 2, dyn.discount);
  pomdp.base.initial_distribution = {1.0, 0.0, 0.0};
  for (int s = 0; s < kAttackStates; ++s) {
    for (int s2 = 0; s2 < kAttackStates; ++s2) {
      pomdp.base.p(s, 0, s2) = cont[static_cast<size_t>(s)][static_cast<size_t>(s2)];
      pomdp.base.p(s, 1, s2) = stop[static_cast<size_t>(s)][static_cast<size_t>(s2)];
    }
    int intrusion = s == 2 ? 1 : 0;
    pomdp.base.r(s, 0) =
        node_utility(sub.ancestor_count, sub.zone_active(z0) ? 1 : 0,
                     intrusion, 0, dyn.action_costs, dyn.eta, dyn.k);
    pomdp.base.r(s, 1) =
        node_utility(sub.ancestor_count, sub.zone_active(z_after) ? 1 : 0,
                     intrusion, a_stop, dyn.action_costs, dyn.eta, dyn.k);
  }
  pomdp.observation_count = static_cast<int>(dyn.obs[0].size());
  pomdp.observation.assign(
      static_cast<size_t>(kAttackStates) * pomdp.observation_count, 0.0);
  for (int s = 0; s < kAttackStates; ++s)
    for (int o = 0; o < pomdp.observation_count; ++o)
      pomdp.z(o, s) = dyn.obs[static_cast<size_t>(s)][static_cast<size_t>(o)];
  pomdp.validate();
  return pomdp;
}

namespace {

// Exact 3-state Bayes step on the stopping POMDP tables.
std::array<double, 3> stopping_belief_update(const FinitePomdp& pomdp,
                                             const std::array<double, 3>& b,
                                             int action, int obs) {
  std::array<double, 3> pred{0.0, 0.0, 0.0};
  for (int s = 0; s < 3; ++s)
    for (int s2 = 0; s2 < 3; ++s2)
      pred[static_cast<size_t>(s2)] += b[static_cast<size_t>(s)] * pomdp.base.p(s, action, s2);
  std::array<double, 3> post{0.0, 0.0, 0.0};
  double norm = 0.0;
  for (int s2 = 0; s2 < 3; ++s2) {
    post[static_cast<size_t>(s2)] = pomdp.z(obs, s2) * pred[static_cast<size_t>(s2)];
    norm += post[static_cast<size_t>(s2)];
  }
  if (norm < 1e-300)
    throw RealizabilityError("stopping subgame: unrealizable observation");
  for (double& v : post) v /= norm;
  return post;
}

double simulate_stopping_policy(const FinitePomdp& pomdp,
                                const SwitchingCurvePolicy& curve,
                                RngStream rng, int horizon) {
  std::array<double, 3> b{1.0, 0.0, 0.0};
  int s = 0;
  double total = 0.0, disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    int a = curve.stop(b) ? 1 : 0;
    total += disc * pomdp.base.r(s, a);
    disc *= pomdp.base.discount;
    double u = rng.uniform();
    int s2 = 2;
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      acc += pomdp.base.p(s, a, c);
      if (u < acc) {
        s2 = c;
        break;
      }
    }
    std::vector<double> row(static_cast<size_t>(pomdp.observation_count));
    for (int o = 0; o < pomdp.observation_count; ++o)
      row[static_cast<size_t>(o)] = pomdp.z(o, s2);
    int obs = rng.categorical(row);
    b = stopping_belief_update(pomdp, b, a, obs);
    s = s2;
  }
  return total;
}

}  // namespace

LocalDefenderPolicy local_best_response_defender(const NodeSubgame& sub,
                                                 const LocalAttackerTable& att,
                                                 const LocalBrBudget& budget,
                                                 RngStream rng) {
  const LocalDynamics& dyn = sub.dyn;
  const int zc = sub.zone_count;
  const int na = dyn.defender_actions(zc);

  // which-action zone MDP: deterministic zone moves, utility of staying
  // active minus the action cost
  FiniteMdp zone_mdp = FiniteMdp::zeros(zc, na, dyn.discount);
  zone_mdp.initial_distribution.assign(static_cast<size_t>(zc), 0.0);
  zone_mdp.initial_distribution[static_cast<size_t>(sub.initial_zone)] = 1.0;
  for (int z = 0; z < zc; ++z) {
    for (int a = 0; a < na; ++a) {
      int z2 = next_zone(z, a, zc);
      zone_mdp.p(z, a, z2) = 1.0;
      zone_mdp.r(z, a) =
          node_utility(sub.ancestor_count, sub.zone_active(z) ? 1 : 0, 0, a,
                       dyn.action_costs, dyn.eta, dyn.k);
    }
  }
  SolveResult zone_sol = value_iterate(zone_mdp, 1e-10);
  LocalDefenderPolicy policy;
  policy.zone_action.resize(static_cast<size_t>(zc));
  for (int z = 0; z < zc; ++z) {
    int best_a = 1;
    double best_q = -1e300;
    for (int a = 1; a < na; ++a) {  // defensive actions only
      int z2 = next_zone(z, a, zc);
      double qv = zone_mdp.r(z, a) +
                  dyn.discount * zone_sol.values[static_cast<size_t>(z2)];
      if (qv > best_q + 1e-12) {
        best_q = qv;
        best_a = a;
      }
    }
    policy.zone_action[static_cast<size_t>(z)] = best_a;
  }

  // when-to-act switching curve fitted on the stopping subproblem
  FinitePomdp pomdp = build_node_stopping_pomdp(sub, att, policy.zone_action);
  NoisyObjective objective = [&](const std::vector<double>& x,
                                 RngStream& eval) {
    SwitchingCurvePolicy curve =
        SwitchingCurvePolicy::from_unconstrained(x[0], x[1]);
    double total = 0.0;
    for (int e = 0; e < budget.episodes_per_eval; ++e)
      total += simulate_stopping_policy(
          pomdp, curve, eval.substream("episode", static_cast<uint64_t>(e)),
          budget.horizon);
    return total / std::max(1, budget.episodes_per_eval);
  };
  std::vector<double> best;
  double best_score = 0.0;
  int runs = std::max(1, budget.restarts);
  for (int r = 0; r < runs; ++r) {
    RngStream run = rng.substream("restart", static_cast<uint64_t>(r));
    std::vector<double> init = {static_cast<double>(run.rademacher()),
                                static_cast<double>(run.rademacher())};
    std::vector<double> cand =
        spsa_optimize(objective, std::move(init), budget.spsa,
                      run.substream("spsa"));
    RngStream eval = rng.substream("select");
    double score = objective(cand, eval);
    if (r == 0 || score > best_score) {
      best_score = score;
      best = std::move(cand);
    }
  }
  policy.curve = SwitchingCurvePolicy::from_unconstrained(best[0], best[1]);
  return policy;
}

BeliefGrid::BeliefGrid(int ppe) : points_per_edge(ppe) {
  if (ppe < 2) throw std::invalid_argument("belief grid: need >= 2 points");
  int g = ppe - 1;
  for (int i = 0; i <= g; ++i)
    for (int j = 0; j + i <= g; ++j)
      cells.push_back({static_cast<double>(g - i - j) / g,
                       static_cast<double>(j) / g,
                       static_cast<double>(i) / g});
}

int BeliefGrid::snap(const std::array<double, 3>& b) const {
  int best = 0;
  double best_d = 1e300;
  for (size_t c = 0; c < cells.size(); ++c) {
    double d = std::fabs(cells[c][0] - b[0]) + std::fabs(cells[c][1] - b[1]) +
               std::fabs(cells[c][2] - b[2]);
    if (d < best_d - 1e-15) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

LocalAttackerTable LocalAttackerPolicy::to_table() const {
  LocalAttackerTable t{};
  size_t cells = action.size() / kAttackStates;
  for (int s = 0; s < kAttackStates; ++s) {
    for (size_t c = 0; c < cells; ++c)
      t[static_cast<size_t>(s)][static_cast<size_t>(
          action[static_cast<size_t>(s) * cells + c])] += 1.0;
    for (int a = 0; a < kAttackerActions; ++a)
      t[static_cast<size_t>(s)][static_cast<size_t>(a)] /= static_cast<double>(cells);
  }
  return t;
}

AttackerBrResult local_best_response_attacker(
    const NodeSubgame& sub, const std::vector<LocalDefenderPolicy>& def_mix,
    const LocalAttackerTable& conj, const LocalBrBudget& budget) {
  if (def_mix.empty())
    throw std::invalid_argument("attacker br: empty defender mixture");
  const LocalDynamics& dyn = sub.dyn;
  BeliefGrid grid(budget.grid_points);
  const int cells = static_cast<int>(grid.cells.size());
  const int n_obs = static_cast<int>(dyn.obs[0].size());
  const int z0 = sub.initial_zone;
  const double mix_w = 1.0 / static_cast<double>(def_mix.size());

  FiniteMdp mdp =
      FiniteMdp::zeros(kAttackStates * cells, kAttackerActions, dyn.discount);
  mdp.initial_distribution.assign(static_cast<size_t>(mdp.state_count), 0.0);
  std::array<double, 3> e1{1.0, 0.0, 0.0};
  int start_cell = grid.snap(e1);
  mdp.initial_distribution[static_cast<size_t>(start_cell)] = 1.0;

  // cache belief successors: for (cell, defensive?, obs) -> next cell
  auto belief_next = [&](int cell, bool defensive, int obs, bool& realizable) {
    const auto& b = grid.cells[static_cast<size_t>(cell)];
    std::array<double, 3> pred{0.0, 0.0, 0.0};
    for (int s = 0; s < kAttackStates; ++s) {
      for (int a = 0; a < kAttackerActions; ++a) {
        double pa = conj[static_cast<size_t>(s)][static_cast<size_t>(a)];
        if (pa == 0.0) continue;
        auto row = attack_transition(dyn, s, a, defensive);
        for (int s2 = 0; s2 < kAttackStates; ++s2)
          pred[static_cast<size_t>(s2)] += b[static_cast<size_t>(s)] * pa * row[static_cast<size_t>(s2)];
      }
    }
    std::array<double, 3> post{0.0, 0.0, 0.0};
    double norm = 0.0;
    for (int s2 = 0; s2 < kAttackStates; ++s2) {
      post[static_cast<size_t>(s2)] =
          dyn.obs[static_cast<size_t>(s2)][static_cast<size_t>(obs)] * pred[static_cast<size_t>(s2)];
      norm += post[static_cast<size_t>(s2)];
    }
    realizable = norm > 1e-300;
    if (realizable)
      for (double& v : post) v /= norm;
    return grid.snap(post);
  };
  std::vector<int> next_cell(static_cast<size_t>(cells) * 2 * n_obs, 0);
  for (int c = 0; c < cells; ++c)
    for (int d = 0; d < 2; ++d)
      for (int o = 0; o < n_obs; ++o) {
        bool ok = false;
        int nc = belief_next(c, d == 1, o, ok);
        next_cell[(static_cast<size_t>(c) * 2 + d) * n_obs + o] = ok ? nc : -1;
      }

  for (int s = 0; s < kAttackStates; ++s) {
    int intrusion = s == 2 ? 1 : 0;
    for (int c = 0; c < cells; ++c) {
      int state = s * cells + c;
      const auto& b = grid.cells[static_cast<size_t>(c)];
      for (int a = 0; a < kAttackerActions; ++a) {
        double reward = 0.0;
        for (const auto& d : def_mix) {
          bool stops = d.curve.stop(b);
          int a_def = stops ? d.zone_action[static_cast<size_t>(z0)] : 0;
          int z_now = z0;  // the zone is held at the subgame's initial zone
          reward -= mix_w * node_utility(sub.ancestor_count,
                                         sub.zone_active(z_now) ? 1 : 0,
                                         intrusion, a_def, dyn.action_costs,
                                         dyn.eta, dyn.k);
          auto row = attack_transition(dyn, s, a, stops);
          for (int s2 = 0; s2 < kAttackStates; ++s2) {
            if (row[static_cast<size_t>(s2)] == 0.0) continue;
            for (int o = 0; o < n_obs; ++o) {
              double zo = dyn.obs[static_cast<size_t>(s2)][static_cast<size_t>(o)];
              if (zo == 0.0) continue;
              int nc = next_cell[(static_cast<size_t>(c) * 2 + (stops ? 1 : 0)) * n_obs + o];
              if (nc < 0) nc = c;  // conjecture-unrealizable path: hold
              mdp.p(state, a, s2 * cells + nc) +=
                  mix_w * row[static_cast<size_t>(s2)] * zo;
            }
          }
        }
        mdp.r(state, a) = reward;
      }
    }
  }
  mdp.validate();
  SolveResult sol = value_iterate(mdp, 1e-9);

  AttackerBrResult res;
  res.policy.grid_points = budget.grid_points;
  res.policy.action = sol.policy;
  res.value = sol.values[static_cast<size_t>(start_cell)];

  // adjacency disagreement on the simplex grid
  int g = budget.grid_points - 1;
  auto cell_index = [&](int i, int j) {
    // cells enumerated as (i: third coord steps, j: second coord steps)
    return i * (g + 1) - i * (i - 1) / 2 + j;
  };
  long pairs = 0, disagreements = 0;
  for (int s = 0; s < kAttackStates; ++s) {
    for (int i = 0; i <= g; ++i) {
      for (int j = 0; j + i <= g; ++j) {
        int here = sol.policy[static_cast<size_t>(s * cells + cell_index(i, j))];
        if (j + 1 + i <= g) {
          int right = sol.policy[static_cast<size_t>(s * cells + cell_index(i, j + 1))];
          ++pairs;
          if (right != here) ++disagreements;
        }
        if (i + 1 + j <= g) {
          int up = sol.policy[static_cast<size_t>(s * cells + cell_index(i + 1, j))];
          ++pairs;
          if (up != here) ++disagreements;
        }
      }
    }
  }
  res.disagreement = pairs > 0 ? static_cast<double>(disagreements) / pairs : 0.0;
  res.too_coarse = res.disagreement > 0.2;
  return res;
}

CompositeEpisode simulate_composite_episode(
    const InfraGraph& graph, const LocalDynamics& dyn,
    const std::vector<LocalDefenderPolicy>& def,
    const std::vector<LocalAttackerPolicy>& att,
    const std::vector<LocalAttackerTable>& conj, const BeliefGrid& grid,
    RngStream rng, int horizon) {
  const int n = graph.node_count;
  if (static_cast<int>(def.size()) != n || static_cast<int>(att.size()) != n ||
      static_cast<int>(conj.size()) != n)
    throw std::invalid_argument("composite: one policy per node required");
  const int cells = static_cast<int>(grid.cells.size());
  std::vector<int> s(static_cast<size_t>(n), 0);
  std::vector<int> zone(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) zone[static_cast<size_t>(i)] = graph.zone[i + 1];
  std::vector<std::array<double, 3>> belief(static_cast<size_t>(n),
                                            {1.0, 0.0, 0.0});
  CompositeEpisode ep;
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    double u = 0.0;
    for (int i = 0; i < n; ++i) {
      RngStream node = rng.substream("step", static_cast<uint64_t>(t))
                           .substream("node", static_cast<uint64_t>(i));
      bool stops = def[static_cast<size_t>(i)].curve.stop(belief[static_cast<size_t>(i)]);
      int a_def = stops ? def[static_cast<size_t>(i)]
                              .zone_action[static_cast<size_t>(zone[static_cast<size_t>(i)])]
                        : 0;
      int a_att = att[static_cast<size_t>(i)].act(
          s[static_cast<size_t>(i)], grid.snap(belief[static_cast<size_t>(i)]), cells);
      u += node_utility(graph.ancestor_count(i + 1),
                        graph.zone_active(zone[static_cast<size_t>(i)]) ? 1 : 0,
                        s[static_cast<size_t>(i)] == 2 ? 1 : 0, a_def,
                        dyn.action_costs, dyn.eta, dyn.k);
      // advance the node
      auto row = attack_transition(dyn, s[static_cast<size_t>(i)], a_att, stops);
      double draw = node.uniform();
      int s2 = 2;
      double acc = 0.0;
      for (int c = 0; c < kAttackStates; ++c) {
        acc += row[static_cast<size_t>(c)];
        if (draw < acc) {
          s2 = c;
          break;
        }
      }
      int obs = node.categorical(dyn.obs[static_cast<size_t>(s2)]);
      // defender filter under the conjectured attacker table
      std::array<double, 3> pred{0.0, 0.0, 0.0};
      for (int ps = 0; ps < kAttackStates; ++ps) {
        for (int pa = 0; pa < kAttackerActions; ++pa) {
          double w = conj[static_cast<size_t>(i)][static_cast<size_t>(ps)][static_cast<size_t>(pa)];
          if (w == 0.0) continue;
          auto prow = attack_transition(dyn, ps, pa, stops);
          for (int ns = 0; ns < kAttackStates; ++ns)
            pred[static_cast<size_t>(ns)] +=
                belief[static_cast<size_t>(i)][static_cast<size_t>(ps)] * w * prow[static_cast<size_t>(ns)];
        }
      }
      std::array<double, 3> post{0.0, 0.0, 0.0};
      double norm = 0.0;
      for (int ns = 0; ns < kAttackStates; ++ns) {
        post[static_cast<size_t>(ns)] =
            dyn.obs[static_cast<size_t>(ns)][static_cast<size_t>(obs)] * pred[static_cast<size_t>(ns)];
        norm += post[static_cast<size_t>(ns)];
      }
      if (norm > 1e-300) {
        for (double& v : post) v /= norm;
        belief[static_cast<size_t>(i)] = post;
      }
      s[static_cast<size_t>(i)] = s2;
      zone[static_cast<size_t>(i)] =
          next_zone(zone[static_cast<size_t>(i)], a_def, graph.zone_count);
    }
    ep.utility += disc * u;
    disc *= dyn.discount;
    ++ep.length;
  }
  return ep;
}

namespace {

struct NodeBr {
  LocalDefenderPolicy defender;
  AttackerBrResult attacker;
  double defender_value = 0.0;
};

LocalAttackerTable mixture_table(const std::vector<LocalAttackerPolicy>& mix) {
  LocalAttackerTable t{};
  for (const auto& p : mix) {
    LocalAttackerTable pt = p.to_table();
    for (int s = 0; s < kAttackStates; ++s)
      for (int a = 0; a < kAttackerActions; ++a)
        t[static_cast<size_t>(s)][static_cast<size_t>(a)] +=
            pt[static_cast<size_t>(s)][static_cast<size_t>(a)] / static_cast<double>(mix.size());
  }
  return t;
}

NodeBr node_best_responses(const NodeSubgame& sub,
                           const std::vector<LocalDefenderPolicy>& def_mix,
                           const std::vector<LocalAttackerPolicy>& att_mix,
                           const LocalBrBudget& budget, RngStream rng) {
  NodeBr out;
  LocalAttackerTable att_table = mixture_table(att_mix);
  out.defender = local_best_response_defender(sub, att_table, budget,
                                              rng.substream("defender"));
  out.attacker = local_best_response_attacker(sub, def_mix, att_table, budget);
  // defender best-response value on its own stopping model
  FinitePomdp pomdp =
      build_node_stopping_pomdp(sub, att_table, out.defender.zone_action);
  RngStream eval = rng.substream("value");
  double total = 0.0;
  const int episodes = 50;
  for (int e = 0; e < episodes; ++e)
    total += simulate_stopping_policy(
        pomdp, out.defender.curve,
        eval.substream("episode", static_cast<uint64_t>(e)), budget.horizon);
  out.defender_value = total / episodes;
  return out;
}

}  // namespace

DfpResult dfp(const InfraGraph& graph, const LocalDynamics& dyn,
              const DfpConfig& cfg, uint64_t seed) {
  if (cfg.target_delta <= 0)
    throw std::invalid_argument("dfp: target exploitability must be > 0");
  std::vector<NodeSubgame> subs = decompose(graph, dyn);
  const int n = graph.node_count;
  BeliefGrid grid(cfg.budget.grid_points);
  const int cells = static_cast<int>(grid.cells.size());

  DfpResult res;
  res.defender.resize(static_cast<size_t>(n));
  res.attacker.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    LocalDefenderPolicy d;
    d.zone_action.assign(static_cast<size_t>(graph.zone_count), 1);
    d.curve = SwitchingCurvePolicy{1.0, 0.5};
    res.defender[static_cast<size_t>(i)].push_back(d);
    LocalAttackerPolicy a;
    a.grid_points = cfg.budget.grid_points;
    a.action.assign(static_cast<size_t>(kAttackStates) * cells, 0);
    res.attacker[static_cast<size_t>(i)].push_back(a);
  }

  RngStream rng(seed);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    auto started = std::chrono::steady_clock::now();
    RngStream iter = rng.substream("iteration", static_cast<uint64_t>(it));

    std::vector<NodeBr> brs(static_cast<size_t>(n));
    auto run_node = [&](int i) {
      return node_best_responses(
          subs[static_cast<size_t>(i)], res.defender[static_cast<size_t>(i)],
          res.attacker[static_cast<size_t>(i)], cfg.budget,
          iter.substream("node", static_cast<uint64_t>(i)));
    };
    if (cfg.parallel) {
      std::vector<std::future<NodeBr>> futures;
      futures.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        futures.push_back(std::async(std::launch::async, run_node, i));
      for (int i = 0; i < n; ++i)
        brs[static_cast<size_t>(i)] = futures[static_cast<size_t>(i)].get();
    } else {
      for (int i = 0; i < n; ++i) brs[static_cast<size_t>(i)] = run_node(i);
    }

    // composite best-response profiles and the averaged mixtures
    std::vector<LocalDefenderPolicy> def_br(static_cast<size_t>(n));
    std::vector<LocalAttackerPolicy> att_br(static_cast<size_t>(n));
    std::vector<LocalAttackerTable> conj(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      def_br[static_cast<size_t>(i)] = brs[static_cast<size_t>(i)].defender;
      att_br[static_cast<size_t>(i)] = brs[static_cast<size_t>(i)].attacker.policy;
      conj[static_cast<size_t>(i)] =
          mixture_table(res.attacker[static_cast<size_t>(i)]);
    }

    // paired exploitability estimate: the same episode streams drive both
    // terms of the difference
    RngStream eval = iter.substream("exploitability");
    double total = 0.0, total_sq = 0.0;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      RngStream ep = eval.substream("episode", static_cast<uint64_t>(e));
      RngStream pick = ep.substream("pick");
      std::vector<LocalDefenderPolicy> def_mixed(static_cast<size_t>(n));
      std::vector<LocalAttackerPolicy> att_mixed(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        const auto& db = res.defender[static_cast<size_t>(i)];
        const auto& ab = res.attacker[static_cast<size_t>(i)];
        def_mixed[static_cast<size_t>(i)] =
            db[static_cast<size_t>(pick.uniform_int(static_cast<int>(db.size())))];
        att_mixed[static_cast<size_t>(i)] =
            ab[static_cast<size_t>(pick.uniform_int(static_cast<int>(ab.size())))];
      }
      double j1 = simulate_composite_episode(graph, dyn, def_br, att_mixed,
                                             conj, grid, ep.substream("sim"),
                                             cfg.horizon)
                      .utility;
      double j2 = simulate_composite_episode(graph, dyn, def_mixed, att_br,
                                             conj, grid, ep.substream("sim"),
                                             cfg.horizon)
                      .utility;
      double d = j1 - j2;
      total += d;
      total_sq += d * d;
    }
    double delta = total / cfg.eval_episodes;
    double var = std::max(0.0, total_sq / cfg.eval_episodes - delta * delta);
    double se = cfg.eval_episodes > 1
                    ? std::sqrt(var / (cfg.eval_episodes - 1))
                    : 0.0;

    for (int i = 0; i < n; ++i) {
      res.defender[static_cast<size_t>(i)].push_back(def_br[static_cast<size_t>(i)]);
      res.attacker[static_cast<size_t>(i)].push_back(att_br[static_cast<size_t>(i)]);
    }

    DfpTraceRow row;
    row.iteration = it;
    row.exploitability = delta;
    row.std_error = se;
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      started)
            .count();
    for (int i = 0; i < n; ++i)
      row.node_defender_br_values.push_back(
          brs[static_cast<size_t>(i)].defender_value);
    res.trace.push_back(row);
    res.final_delta = delta;
    if (delta < cfg.target_delta) {
      res.converged = true;
      break;
    }
  }
  return res;
}

std::string dfp_trace_csv(const DfpResult& result) {
  std::string out = "iteration,exploitability,std_error,wall_time_s";
  size_t n = result.trace.empty()
                 ? 0
                 : result.trace[0].node_defender_br_values.size();
  for (size_t i = 0; i < n; ++i)
    out += ",node" + std::to_string(i + 1) + "_br_value";
  out += "\n";
  char buf[64];
  for (const auto& row : result.trace) {
    out += std::to_string(row.iteration);
    for (double v : {row.exploitability, row.std_error, row.wall_time_s}) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    for (double v : row.node_defender_br_values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace resp
