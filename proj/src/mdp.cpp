#include "resp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <json.hpp>

#include "resp/lp.hpp"

namespace resp {

namespace {

bool row_is_distribution(const double* row, int n, double tol = 1e-9) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (row[i] < -1e-12 || row[i] > 1.0 + 1e-12) return false;
    sum += row[i];
  }
  return std::fabs(sum - 1.0) <= tol;
}

}  // namespace

FiniteMdp FiniteMdp::zeros(int states, int actions, double discount) {
  FiniteMdp m;
  m.state_count = states;
  m.action_count = actions;
  m.discount = discount;
  m.transition.assign(static_cast<size_t>(states) * actions * states, 0.0);
  m.reward.assign(static_cast<size_t>(states) * actions, 0.0);
  m.initial_distribution.assign(states, 0.0);
  if (states > 0) m.initial_distribution[0] = 1.0;
  return m;
}

void FiniteMdp::validate() const {
  if (state_count <= 0 || action_count <= 0)
    throw std::invalid_argument("mdp: state/action counts must be positive");
  if (discount < 0.0 || discount > 1.0)
    throw std::invalid_argument("mdp: discount must lie in [0, 1]");
  if (horizon == kInfiniteHorizon && discount >= 1.0)
    throw std::invalid_argument("mdp: infinite horizon requires discount < 1");
  if (transition.size() !=
      static_cast<size_t>(state_count) * action_count * state_count)
    throw std::invalid_argument("mdp: transition table has wrong shape");
  if (reward.size() != static_cast<size_t>(state_count) * action_count)
    throw std::invalid_argument("mdp: reward table has wrong shape");
  for (int s = 0; s < state_count; ++s)
    for (int a = 0; a < action_count; ++a) {
      if (!row_is_distribution(
              &transition[(static_cast<size_t>(s) * action_count + a) *
                          state_count],
              state_count))
        throw std::invalid_argument("mdp: transition row is not a distribution");
      if (!std::isfinite(r(s, a)))
        throw std::invalid_argument("mdp: non-finite reward entry");
    }
  if (initial_distribution.size() != static_cast<size_t>(state_count) ||
      !row_is_distribution(initial_distribution.data(), state_count))
    throw std::invalid_argument("mdp: initial distribution invalid");
}

void FinitePomdp::validate() const {
  base.validate();
  if (observation_count <= 0)
    throw std::invalid_argument("pomdp: observation count must be positive");
  if (observation.size() !=
      static_cast<size_t>(base.state_count) * observation_count)
    throw std::invalid_argument("pomdp: observation table has wrong shape");
  for (int s = 0; s < base.state_count; ++s)
    if (!row_is_distribution(
            &observation[static_cast<size_t>(s) * observation_count],
            observation_count))
      throw std::invalid_argument("pomdp: observation row is not a distribution");
}

void BeliefState::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (v < -1e-12) throw std::invalid_argument("belief: negative entry");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("belief: does not sum to 1");
}

double AlphaVectorSet::value(const std::vector<double>& belief) const {
  int idx = best_vector(belief);
  double v = 0.0;
  for (size_t s = 0; s < belief.size(); ++s) v += belief[s] * vectors[idx][s];
  return v;
}

int AlphaVectorSet::best_vector(const std::vector<double>& belief) const {
  if (vectors.empty()) throw std::logic_error("empty alpha-vector set");
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  double sign = (sense == Sense::Maximize) ? 1.0 : -1.0;
  for (size_t i = 0; i < vectors.size(); ++i) {
    double v = 0.0;
    for (size_t s = 0; s < belief.size(); ++s) v += belief[s] * vectors[i][s];
    v *= sign;
    if (v > best_v + 1e-14) {
      best_v = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double StepSizeSchedule::gain(long n) const {
  return a / std::pow(static_cast<double>(n) + A, epsilon);
}

double StepSizeSchedule::perturbation(long n) const {
  return c / std::pow(static_cast<double>(n), lambda);
}

void StepSizeSchedule::validate() const {
  if (a <= 0 || A < 0 || c <= 0)
    throw std::invalid_argument("schedule: coefficients must be positive");
  if (kind == Kind::RobbinsMonro && (epsilon <= 0.5 || epsilon > 1.0))
    throw std::invalid_argument(
        "schedule: Robbins-Monro requires epsilon in (0.5, 1]");
  if (epsilon <= 0 || lambda < 0)
    throw std::invalid_argument("schedule: invalid exponents");
}

namespace {

// One application of the Bellman optimality operator; fills greedy policy.
double bellman_sweep(const FiniteMdp& m, const std::vector<double>& j,
                     std::vector<double>& out, std::vector<int>& pol) {
  double residual = 0.0;
  for (int s = 0; s < m.state_count; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    int best_a = 0;
    for (int a = 0; a < m.action_count; ++a) {
      double q = m.r(s, a);
      for (int s2 = 0; s2 < m.state_count; ++s2)
        q += m.discount * m.p(s, a, s2) * j[s2];
      if (!std::isfinite(q))
        throw std::invalid_argument("non-finite Bellman backup; malformed reward table");
      if (q > best + 1e-14) {
        best = q;
        best_a = a;
      }
    }
    out[s] = best;
    pol[s] = best_a;
    residual = std::max(residual, std::fabs(best - j[s]));
  }
  return residual;
}

}  // namespace

SolveResult value_iterate(const FiniteMdp& mdp, double tolerance) {
  mdp.validate();
  if (tolerance <= 0) throw std::invalid_argument("tolerance must be positive");
  std::vector<double> j(mdp.state_count, 0.0), next(mdp.state_count, 0.0);
  std::vector<int> pol(mdp.state_count, 0);
  if (mdp.discount >= 1.0) {
    // Undiscounted models are only valid with a finite horizon; run exactly
    // that many backward-induction sweeps.
    for (long t = 0; t < mdp.horizon; ++t) {
      bellman_sweep(mdp, j, next, pol);
      j.swap(next);
    }
    return {j, pol};
  }
  const long cap = 100000000;
  for (long it = 0; it < cap; ++it) {
    double residual = bellman_sweep(mdp, j, next, pol);
    j.swap(next);
    if (residual <= tolerance) return {j, pol};
    if (mdp.discount == 0.0) return {j, pol};
  }
  throw std::runtime_error("value iteration failed to converge");
}

SolveResult policy_iterate(const FiniteMdp& mdp) {
  mdp.validate();
  if (mdp.discount >= 1.0)
    throw std::invalid_argument("policy iteration requires discount < 1");
  int n = mdp.state_count;
  std::vector<int> pol(n, 0);
  std::vector<double> j(n, 0.0);
  long cap = 1;
  for (int s = 0; s < n; ++s) {
    cap *= mdp.action_count;
    if (cap > 1000000) { cap = 1000000; break; }
  }
  cap += 2;
  for (long it = 0; it < cap; ++it) {
    // Exact evaluation: (I - gamma P_pi) J = r_pi.
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (int s = 0; s < n; ++s) {
      for (int s2 = 0; s2 < n; ++s2)
        A(s, s2) -= mdp.discount * mdp.p(s, pol[s], s2);
      b(s) = mdp.r(s, pol[s]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible())
      throw std::runtime_error("singular policy-evaluation system");
    Eigen::VectorXd x = lu.solve(b);
    for (int s = 0; s < n; ++s) j[s] = x(s);

    std::vector<int> next_pol(n, 0);
    std::vector<double> dummy(n, 0.0);
    bellman_sweep(mdp, j, dummy, next_pol);
    if (next_pol == pol) return {j, pol};
    pol = next_pol;
  }
  throw std::runtime_error("policy iteration failed to terminate");
}

std::vector<double> solve_mdp_lp(const FiniteMdp& mdp,
                                 const std::vector<double>& weights) {
  mdp.validate();
  if (mdp.discount >= 1.0)
    throw std::invalid_argument("lp solve requires discount < 1");
  if (weights.size() != static_cast<size_t>(mdp.state_count))
    throw std::invalid_argument("weights size mismatch");
  for (double w : weights)
    if (w <= 0) throw std::invalid_argument("weights must be strictly positive");

  LpBuilder lp;
  std::vector<int> var(mdp.state_count);
  for (int s = 0; s < mdp.state_count; ++s)
    var[s] = lp.add_var(weights[s], /*free_var=*/true);
  for (int s = 0; s < mdp.state_count; ++s)
    for (int a = 0; a < mdp.action_count; ++a) {
      std::vector<std::pair<int, double>> terms;
      terms.emplace_back(var[s], 1.0);
      for (int s2 = 0; s2 < mdp.state_count; ++s2) {
        double coef = -mdp.discount * mdp.p(s, a, s2);
        if (coef != 0.0) {
          if (s2 == s)
            terms[0].second += coef;
          else
            terms.emplace_back(var[s2], coef);
        }
      }
      lp.add_constraint(terms, LpRel::Ge, mdp.r(s, a));
    }
  LpResult res = lp.solve();
  if (res.status != LpStatus::Optimal)
    throw std::runtime_error("mdp lp infeasible or unbounded (malformed model)");
  std::vector<double> values(mdp.state_count);
  for (int s = 0; s < mdp.state_count; ++s) values[s] = res.x[var[s]];
  return values;
}

std::vector<double> q_learn(const MdpSampler& sampler, int state_count,
                            int action_count, double discount,
                            const StepSizeSchedule& schedule, long steps,
                            RngStream rng) {
  schedule.validate();
  std::vector<double> q(static_cast<size_t>(state_count) * action_count, 0.0);
  std::vector<long> visits(q.size(), 0);
  for (long t = 0; t < steps; ++t) {
    int s = rng.uniform_int(state_count);
    int a = rng.uniform_int(action_count);
    auto [s2, r] = sampler(s, a, rng);
    double best_next = -std::numeric_limits<double>::infinity();
    for (int a2 = 0; a2 < action_count; ++a2)
      best_next = std::max(best_next,
                           q[static_cast<size_t>(s2) * action_count + a2]);
    size_t idx = static_cast<size_t>(s) * action_count + a;
    double alpha = schedule.gain(++visits[idx]);
    q[idx] += alpha * (r + discount * best_next - q[idx]);
  }
  return q;
}

BeliefState belief_update(const FinitePomdp& pomdp, const BeliefState& b,
                          int action, int obs) {
  const FiniteMdp& m = pomdp.base;
  BeliefState out;
  out.p.assign(m.state_count, 0.0);
  double norm = 0.0;
  for (int s2 = 0; s2 < m.state_count; ++s2) {
    double pred = 0.0;
    for (int s = 0; s < m.state_count; ++s) pred += b.p[s] * m.p(s, action, s2);
    double v = pomdp.z(obs, s2) * pred;
    out.p[s2] = v;
    norm += v;
  }
  if (norm < 1e-12)
    throw RealizabilityError("belief update: observation has ~zero predictive probability");
  for (double& v : out.p) v /= norm;
  return out;
}

namespace {

// Deduplicate and drop pointwise-dominated vectors; preserves first-seen order.
void pointwise_prune(std::vector<std::vector<double>>& vecs,
                     std::vector<int>* tags) {
  std::vector<bool> keep(vecs.size(), true);
  for (size_t i = 0; i < vecs.size(); ++i) {
    if (!keep[i]) continue;
    for (size_t j = 0; j < vecs.size(); ++j) {
      if (i == j || !keep[j]) continue;
      // Does j weakly dominate i (and i appears later on exact ties)?
      bool dom = true;
      bool equal = true;
      for (size_t s = 0; s < vecs[i].size(); ++s) {
        if (vecs[j][s] < vecs[i][s] - 1e-14) { dom = false; break; }
        if (std::fabs(vecs[j][s] - vecs[i][s]) > 1e-14) equal = false;
      }
      if (dom && (!equal || j < i)) { keep[i] = false; break; }
    }
  }
  size_t w = 0;
  for (size_t i = 0; i < vecs.size(); ++i)
    if (keep[i]) {
      if (w != i) {
        vecs[w] = std::move(vecs[i]);
        if (tags) (*tags)[w] = (*tags)[i];
      }
      ++w;
    }
  vecs.resize(w);
  if (tags) tags->resize(w);
}

int argmax_at_belief(const std::vector<std::vector<double>>& vecs,
                     const std::vector<size_t>& pool,
                     const std::vector<double>& belief) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < pool.size(); ++k) {
    double v = 0.0;
    const auto& alpha = vecs[pool[k]];
    for (size_t s = 0; s < belief.size(); ++s) v += belief[s] * alpha[s];
    if (v > best_v + 1e-12) {
      best_v = v;
      best = static_cast<int>(k);
    }
  }
  return best;
}

// Finds a belief where candidate strictly beats every vector in the kept set,
// or reports none exists (exact LP domination test).
bool witness_belief(const std::vector<double>& cand,
                    const std::vector<std::vector<double>>& kept,
                    std::vector<double>& belief_out) {
  if (kept.empty()) {
    belief_out.assign(cand.size(), 0.0);
    belief_out[0] = 1.0;
    return true;
  }
  size_t n = cand.size();
  LpBuilder lp;
  std::vector<int> bv(n);
  for (size_t s = 0; s < n; ++s) bv[s] = lp.add_var(0.0);
  int d = lp.add_var(-1.0, /*free_var=*/true);  // maximize d
  {
    std::vector<std::pair<int, double>> terms;
    for (size_t s = 0; s < n; ++s) terms.emplace_back(bv[s], 1.0);
    lp.add_constraint(terms, LpRel::Eq, 1.0);
  }
  for (const auto& psi : kept) {
    std::vector<std::pair<int, double>> terms;
    for (size_t s = 0; s < n; ++s) terms.emplace_back(bv[s], cand[s] - psi[s]);
    terms.emplace_back(d, -1.0);
    lp.add_constraint(terms, LpRel::Ge, 0.0);
  }
  LpResult res = lp.solve();
  if (res.status != LpStatus::Optimal) return false;
  if (-res.objective <= 1e-10) return false;  // best achievable margin
  belief_out.resize(n);
  for (size_t s = 0; s < n; ++s) belief_out[s] = std::max(0.0, res.x[bv[s]]);
  return true;
}

// Lark's filtering: exact prune to the vectors that are uniquely best
// somewhere on the simplex (plus ties resolved by first-seen order).
void lp_prune(std::vector<std::vector<double>>& vecs, std::vector<int>* tags) {
  if (vecs.size() <= 1) return;
  std::vector<size_t> pool(vecs.size());
  for (size_t i = 0; i < vecs.size(); ++i) pool[i] = i;
  std::vector<size_t> kept_idx;
  std::vector<std::vector<double>> kept;

  while (!pool.empty()) {
    const auto& cand = vecs[pool.front()];
    std::vector<double> belief;
    if (!witness_belief(cand, kept, belief)) {
      pool.erase(pool.begin());
      continue;
    }
    int k = argmax_at_belief(vecs, pool, belief);
    kept_idx.push_back(pool[k]);
    kept.push_back(vecs[pool[k]]);
    pool.erase(pool.begin() + k);
  }
  std::sort(kept_idx.begin(), kept_idx.end());
  std::vector<std::vector<double>> out;
  std::vector<int> out_tags;
  for (size_t i : kept_idx) {
    out.push_back(std::move(vecs[i]));
    if (tags) out_tags.push_back((*tags)[i]);
  }
  vecs = std::move(out);
  if (tags) *tags = std::move(out_tags);
}

void prune_set(std::vector<std::vector<double>>& vecs, std::vector<int>* tags,
               bool use_lp) {
  pointwise_prune(vecs, tags);
  if (use_lp) lp_prune(vecs, tags);
}

}  // namespace

AlphaVectorSet exact_pomdp_solve(const FinitePomdp& pomdp, int horizon,
                                 const ExactSolveOptions& opts) {
  pomdp.validate();
  if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  const FiniteMdp& m = pomdp.base;
  double work = std::pow(static_cast<double>(m.action_count) *
                             pomdp.observation_count,
                         static_cast<double>(horizon));
  if (work > opts.work_budget)
    throw WorkBudgetExceeded("exact solve: (|A||O|)^horizon exceeds work budget");

  int n = m.state_count;
  std::vector<std::vector<double>> gamma = {std::vector<double>(n, 0.0)};
  std::vector<int> tags = {-1};
  const size_t hard_cap = 200000;

  for (int t = 0; t < horizon; ++t) {
    std::vector<std::vector<double>> next;
    std::vector<int> next_tags;
    for (int a = 0; a < m.action_count; ++a) {
      // Per-observation backprojections, pruned individually.
      std::vector<std::vector<std::vector<double>>> g_obs(pomdp.observation_count);
      for (int o = 0; o < pomdp.observation_count; ++o) {
        for (const auto& alpha : gamma) {
          std::vector<double> g(n, 0.0);
          for (int s = 0; s < n; ++s) {
            double v = 0.0;
            for (int s2 = 0; s2 < n; ++s2)
              v += m.p(s, a, s2) * pomdp.z(o, s2) * alpha[s2];
            g[s] = v;
          }
          g_obs[o].push_back(std::move(g));
        }
        prune_set(g_obs[o], nullptr, opts.lp_prune);
      }
      // Incremental cross-sum starting from the immediate reward vector.
      std::vector<std::vector<double>> acc;
      {
        std::vector<double> r_a(n);
        for (int s = 0; s < n; ++s) r_a[s] = m.r(s, a);
        acc.push_back(std::move(r_a));
      }
      for (int o = 0; o < pomdp.observation_count; ++o) {
        std::vector<std::vector<double>> merged;
        merged.reserve(acc.size() * g_obs[o].size());
        for (const auto& u : acc)
          for (const auto& g : g_obs[o]) {
            std::vector<double> v(n);
            for (int s = 0; s < n; ++s) v[s] = u[s] + m.discount * g[s];
            merged.push_back(std::move(v));
          }
        if (merged.size() > hard_cap)
          throw WorkBudgetExceeded("exact solve: alpha-vector set exceeded cap");
        prune_set(merged, nullptr, opts.lp_prune);
        acc = std::move(merged);
      }
      for (auto& v : acc) {
        next.push_back(std::move(v));
        next_tags.push_back(a);
      }
    }
    prune_set(next, &next_tags, opts.lp_prune);
    gamma = std::move(next);
    tags = std::move(next_tags);
  }

  AlphaVectorSet out;
  out.vectors = std::move(gamma);
  out.actions = std::move(tags);
  out.sense = Sense::Maximize;
  return out;
}

// --- serialization ---

using nlohmann::json;

static json mdp_json(const FiniteMdp& m) {
  json t = json::array();
  for (int s = 0; s < m.state_count; ++s) {
    json ta = json::array();
    for (int a = 0; a < m.action_count; ++a) {
      json row = json::array();
      for (int s2 = 0; s2 < m.state_count; ++s2) row.push_back(m.p(s, a, s2));
      ta.push_back(row);
    }
    t.push_back(ta);
  }
  json r = json::array();
  for (int s = 0; s < m.state_count; ++s) {
    json row = json::array();
    for (int a = 0; a < m.action_count; ++a) row.push_back(m.r(s, a));
    r.push_back(row);
  }
  return json{{"schema-version", 1},
              {"state_count", m.state_count},
              {"action_count", m.action_count},
              {"transition", t},
              {"reward", r},
              {"discount", m.discount},
              {"initial_distribution", m.initial_distribution},
              {"horizon", m.horizon}};
}

static FiniteMdp mdp_parse(const json& j) {
  FiniteMdp m = FiniteMdp::zeros(j.at("state_count").get<int>(),
                                 j.at("action_count").get<int>(),
                                 j.at("discount").get<double>());
  m.horizon = j.value("horizon", kInfiniteHorizon);
  const auto& t = j.at("transition");
  for (int s = 0; s < m.state_count; ++s)
    for (int a = 0; a < m.action_count; ++a)
      for (int s2 = 0; s2 < m.state_count; ++s2)
        m.p(s, a, s2) = t.at(s).at(a).at(s2).get<double>();
  const auto& r = j.at("reward");
  for (int s = 0; s < m.state_count; ++s)
    for (int a = 0; a < m.action_count; ++a)
      m.r(s, a) = r.at(s).at(a).get<double>();
  if (j.contains("initial_distribution"))
    m.initial_distribution = j.at("initial_distribution").get<std::vector<double>>();
  m.validate();
  return m;
}

std::string mdp_to_json(const FiniteMdp& m) { return mdp_json(m).dump(2); }

FiniteMdp mdp_from_json(const std::string& text) {
  return mdp_parse(json::parse(text));
}

std::string pomdp_to_json(const FinitePomdp& p) {
  json j = mdp_json(p.base);
  j["observation_count"] = p.observation_count;
  json z = json::array();
  for (int s = 0; s < p.base.state_count; ++s) {
    json row = json::array();
    for (int o = 0; o < p.observation_count; ++o) row.push_back(p.z(o, s));
    z.push_back(row);
  }
  j["observation"] = z;
  return j.dump(2);
}

FinitePomdp pomdp_from_json(const std::string& text) {
  json j = json::parse(text);
  FinitePomdp p;
  p.base = mdp_parse(j);
  p.observation_count = j.at("observation_count").get<int>();
  p.observation.assign(
      static_cast<size_t>(p.base.state_count) * p.observation_count, 0.0);
  const auto& z = j.at("observation");
  for (int s = 0; s < p.base.state_count; ++s)
    for (int o = 0; o < p.observation_count; ++o)
      p.z(o, s) = z.at(s).at(o).get<double>();
  p.validate();
  return p;
}

}  // namespace resp
