#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "resp/stopgame.hpp"

using namespace resp;

namespace {

StoppingGame small_game(int stops) {
  StoppingGame g = StoppingGame::benchmark(stops);
  // five-point observation rows keep the tests fast
  g.obs_no_intrusion = beta_binomial_pmf(4, 0.7, 3.0);
  g.obs_intrusion = beta_binomial_pmf(4, 1.0, 0.7);
  return g;
}

}  // namespace

TEST_CASE("game table construction") {
  StoppingGame g = StoppingGame::benchmark(7);
  CHECK(g.reward_stop == 20.0);
  CHECK(g.cost_stop == -2.0);
  CHECK(g.cost_intrusion == -1.0);
  CHECK(g.discount == 0.99);
  CHECK(g.phi(2) == doctest::Approx(0.25));
  CHECK_NOTHROW(g.validate());

  StopGameTables t = build_stopping_game(g);
  // attacker abort from s = 1 ends the game with zero reward
  CHECK(t.p(3, 1, 0, 1, 2) == 1.0);
  CHECK(t.r(3, 1, 0, 1) == 0.0);
  CHECK(t.r(3, 1, 1, 1) == 0.0);
  // ongoing intrusion, both continue: phi_l-weighted termination
  CHECK(t.p(4, 1, 0, 0, 2) == doctest::Approx(g.phi(4)));
  CHECK(t.p(4, 1, 0, 0, 1) == doctest::Approx(1.0 - g.phi(4)));
  // final stop always terminates
  CHECK(t.p(1, 0, 1, 0, 2) == 1.0);
  CHECK(t.p(1, 1, 1, 0, 2) == 1.0);
  // reward scaling by 1/l
  CHECK(t.r(4, 1, 1, 0) == doctest::Approx(20.0 / 4));
  CHECK(t.r(4, 0, 1, 0) == doctest::Approx(-2.0 / 4));
  CHECK(t.r(4, 1, 0, 0) == doctest::Approx(-1.0));  // unscaled
  // rows are distributions
  for (int l = 1; l <= 7; ++l)
    for (int s = 0; s < 3; ++s)
      for (int ad = 0; ad < 2; ++ad)
        for (int aa = 0; aa < 2; ++aa) {
          double total = 0;
          for (int s2 = 0; s2 < 3; ++s2) total += t.p(l, s, ad, aa, s2);
          CHECK(total == doctest::Approx(1.0));
        }
}

TEST_CASE("one-sided belief update") {
  StoppingGame g = small_game(2);

  SUBCASE("never-attack conjecture keeps zero intrusion mass") {
    double b = game_belief_update(g, 0.0, 2, 0, 1, attacker_never_attack());
    CHECK(b == doctest::Approx(0.0));
  }

  SUBCASE("uninformative observations reduce to prediction") {
    StoppingGame u = g;
    u.obs_no_intrusion.assign(5, 0.2);
    u.obs_intrusion.assign(5, 0.2);
    // attacker attacks with probability 0.3 from s = 0; both states can
    // also end, but conditioned on survival the prediction is direct
    AttackerStrategy att = [](double, int s, int) {
      return s == 0 ? 0.3 : 0.0;
    };
    double b = game_belief_update(u, 0.0, 2, 0, 3, att);
    // from b=0: survive in s'=0 w.p. 0.7, s'=1 w.p. 0.3
    CHECK(b == doctest::Approx(0.3));
  }

  SUBCASE("hand-computed two-point mixed strategy") {
    // b=0.5, l=2, defender continues. Attacker: attack w.p. 0.4 in s=0,
    // abort w.p. 0.25 in s=1. phi_2 = 0.25.
    AttackerStrategy att = [](double, int s, int) {
      return s == 0 ? 0.4 : 0.25;
    };
    // pred(0) = 0.5 * 0.6 = 0.3
    // pred(1) = 0.5*0.4 + 0.5*0.75*(1-0.25) = 0.2 + 0.28125 = 0.48125
    double z0 = g.obs_no_intrusion[2], z1 = g.obs_intrusion[2];
    double want = 0.48125 * z1 / (0.3 * z0 + 0.48125 * z1);
    double b = game_belief_update(g, 0.5, 2, 0, 2, att);
    CHECK(b == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("unrealizable observation raises") {
    StoppingGame z = g;
    z.obs_no_intrusion = {1, 0, 0, 0, 0};
    z.obs_intrusion = {1, 0, 0, 0, 0};
    CHECK_THROWS_AS(
        game_belief_update(z, 0.0, 2, 0, 3, attacker_never_attack()),
        RealizabilityError);
  }
}

TEST_CASE("episode simulation determinism and termination") {
  StoppingGame g = small_game(3);
  DefenderStrategy def = defender_hard_strategy({0.6, 0.6, 0.6});
  AttackerStrategy att = attacker_hard_strategy(0.5, 0.9);
  auto a = simulate_game_episode(g, def, att, att, RngStream(5));
  auto b = simulate_game_episode(g, def, att, att, RngStream(5));
  CHECK(a.return_defender == b.return_defender);
  CHECK(a.length == b.length);

  // with phi > 0 and an attacking attacker, episodes terminate well before
  // the cap almost always
  int capped = 0;
  for (int e = 0; e < 100; ++e) {
    auto ep = simulate_game_episode(g, def, attacker_always_attack(),
                                    attacker_always_attack(),
                                    RngStream(100 + e));
    capped += ep.capped ? 1 : 0;
  }
  CHECK(capped == 0);
}

TEST_CASE("defender best response against fixed attackers") {
  StoppingGame g = small_game(2);
  BestResponseBudget budget;
  budget.spsa.iterations = 150;
  budget.episodes_per_eval = 30;

  SUBCASE("never-attacking opponent: do not stop early") {
    auto th = best_response_defender(g, attacker_never_attack(), budget,
                                     RngStream(3));
    DefenderStrategy def = defender_smooth_strategy(th);
    auto v = estimate_defender_value(g, def, attacker_never_attack(), 300,
                                     RngStream(9));
    // never stopping yields exactly 0; stopping only costs
    CHECK(v.mean > -0.25);
    CHECK(v.mean <= 1e-9);
  }

  SUBCASE("reproducible given the seed") {
    auto a = best_response_defender(g, attacker_always_attack(), budget,
                                    RngStream(11));
    auto b = best_response_defender(g, attacker_always_attack(), budget,
                                    RngStream(11));
    CHECK(a.theta == b.theta);
  }

  SUBCASE("value matches a grid-search oracle under a mixed attacker") {
    AttackerStrategy att = [](double b1, int s, int) {
      return s == 0 ? (b1 < 0.4 ? 0.15 : 0.0) : (b1 >= 0.95 ? 1.0 : 0.0);
    };
    auto th = best_response_defender(g, att, budget, RngStream(17));
    auto v = estimate_defender_value(g, defender_smooth_strategy(th), att,
                                     400, RngStream(23));
    double best = -1e300;
    for (int i = 0; i <= 20; ++i)
      for (int j = 0; j <= 20; ++j) {
        DefenderStrategy cand =
            defender_hard_strategy({i / 20.0, j / 20.0});
        auto gv =
            estimate_defender_value(g, cand, att, 400, RngStream(23));
        best = std::max(best, gv.mean);
      }
    CHECK(v.mean >= best - 0.15 * std::max(1.0, std::fabs(best)) -
                        2.5 * v.std_error);
  }
}

TEST_CASE("attacker best response against fixed defenders") {
  StoppingGame g = small_game(2);
  BestResponseBudget budget;
  budget.spsa.iterations = 150;
  budget.episodes_per_eval = 30;

  // the defender filters with a fixed conjecture, independent of the
  // deviating attacker; attacks under this conjecture move the belief up,
  // which lets the smooth attacker family express an abort decision
  AttackerStrategy conj = [](double, int s, int) {
    return s == 0 ? 0.2 : 0.0;
  };

  SUBCASE("always-stopping defender: attacker forces nonpositive value") {
    DefenderStrategy def = defender_hard_strategy({0.0, 0.0});
    auto th = best_response_attacker(g, def, conj, budget, RngStream(31));
    auto att = attacker_smooth_strategy(th, 2);
    auto v = estimate_defender_value(
        g, [&](RngStream&) { return def; }, [&](RngStream&) { return att; },
        conj, 300, RngStream(37));
    CHECK(v.mean <= 2 * v.std_error);
  }

  SUBCASE("passive defender: attack and stay") {
    DefenderStrategy def = [](double, int) { return 0.0; };
    auto th = best_response_attacker(g, def, conj, budget, RngStream(41));
    auto att = attacker_smooth_strategy(th, 2);
    auto v = estimate_defender_value(
        g, [&](RngStream&) { return def; }, [&](RngStream&) { return att; },
        conj, 300, RngStream(43));
    CHECK(v.mean < -1.0);  // intrusion cost accrues until phi stops it
  }
}

TEST_CASE("exploitability") {
  StoppingGame g = small_game(1);
  BestResponseBudget budget;
  budget.spsa.iterations = 120;
  budget.episodes_per_eval = 30;

  SUBCASE("degenerate zero-reward game has zero exploitability") {
    StoppingGame z = g;
    z.reward_stop = 0.0;
    z.cost_stop = 0.0;
    z.cost_intrusion = 0.0;
    DefenderMixture dm;
    dm.buffer.push_back(ThresholdVector{{0.0}});
    AttackerMixture am;
    am.buffer.push_back(AttackerThresholds{{0.0, 0.0}});
    auto ex = exploitability(z, dm, am, budget, 200, RngStream(47));
    CHECK(ex.delta == doctest::Approx(0.0));
    CHECK(ex.std_error == doctest::Approx(0.0));
  }

  SUBCASE("defender best-response term is nonnegative") {
    DefenderMixture dm;
    dm.buffer.push_back(ThresholdVector{{1.0}});
    AttackerMixture am;
    am.buffer.push_back(AttackerThresholds{{0.5, -0.5}});
    auto ex = exploitability(g, dm, am, budget, 300, RngStream(53));
    // the learned defender reply does at least as well as the mixture
    auto base = estimate_defender_value(
        g, defender_mixture_average(dm), attacker_mixture_average(am, 1),
        300, RngStream(59));
    CHECK(ex.value_defender_br >= base.mean - 2.5 * (ex.std_error +
                                                     base.std_error) - 0.1);
  }
}

TEST_CASE("fictitious play") {
  StoppingGame g = small_game(2);
  TfpConfig cfg;
  cfg.target_delta = 1e-9;  // force the full loop
  cfg.max_iterations = 3;
  cfg.budget.spsa.iterations = 60;
  cfg.budget.episodes_per_eval = 20;
  cfg.eval_episodes = 60;

  auto res = t_fp(g, cfg, 71);
  // one initial vector plus one per completed iteration; the loop may end
  // early if the Monte-Carlo exploitability estimate dips below the target
  REQUIRE(res.trace.size() >= 1);
  CHECK(res.trace.size() <= 3);
  CHECK(res.defender.buffer.size() == res.trace.size() + 1);
  CHECK(res.attacker.buffer.size() == res.trace.size() + 1);
  CHECK(res.final_delta == res.trace.back().delta);
  CHECK(res.converged == (res.final_delta < cfg.target_delta));
  for (const auto& th : res.attacker.buffer)
    CHECK(th.theta.size() == 4);

  auto res2 = t_fp(g, cfg, 71);
  REQUIRE(res2.trace.size() == res.trace.size());
  for (size_t i = 0; i < res.trace.size(); ++i)
    CHECK(res.trace[i].delta == res2.trace[i].delta);
}

TEST_CASE("single-stop grid oracle") {
  StoppingGame g = small_game(1);
  auto eq = grid_equilibrium_single_stop(g, 11, 100, 81, 400);
  CHECK(eq.grid.size() == 11);
  double dsum = 0, asum = 0;
  for (double x : eq.defender_mix) {
    CHECK(x >= -1e-9);
    dsum += x;
  }
  for (double y : eq.attacker_mix) {
    CHECK(y >= -1e-9);
    asum += y;
  }
  CHECK(dsum == doctest::Approx(1.0));
  CHECK(asum == doctest::Approx(1.0));
  // the attacker can always force a nonpositive defender value
  CHECK(eq.value <= 1e-6);
  // equilibrium property on the sampled matrix: the mixes are mutual best
  // responses (duality)
  double best_def = -1e300;
  for (size_t i = 0; i < eq.payoff.size(); ++i) {
    double v = 0;
    for (size_t j = 0; j < eq.attacker_mix.size(); ++j)
      v += eq.payoff[i][j] * eq.attacker_mix[j];
    best_def = std::max(best_def, v);
  }
  double best_att = 1e300;
  for (size_t j = 0; j < eq.attacker_mix.size(); ++j) {
    double v = 0;
    for (size_t i = 0; i < eq.defender_mix.size(); ++i)
      v += eq.payoff[i][j] * eq.defender_mix[i];
    best_att = std::min(best_att, v);
  }
  CHECK(best_def == doctest::Approx(eq.value).epsilon(1e-6));
  CHECK(best_att == doctest::Approx(eq.value).epsilon(1e-6));
}
