#include <doctest.h>

#include <cmath>
#include <vector>

#include "aitraffic/policy.hpp"

using namespace aitraffic;

namespace {

WorldState far_apart(double v_ego = 10.0) {
  WorldState w;
  w[AgentId::A].kin = {-200.0, 0.0, 0.0, 0.0, v_ego};
  w[AgentId::B].kin = {0.0, -60.0, std::numbers::pi / 2, 0.0, 10.0};
  return w;
}

AgentModel quiet_model() {
  AgentModel m;
  m.params.noise = NoiseConfig::zero();
  m.params.norms.general_enabled = false;
  return m;
}

ParticleSet point_belief(const WorldState& w, AgentId ego, int n = 20) {
  std::vector<Particle> ps(static_cast<std::size_t>(n), Particle{to_belief_state(w), 1.0});
  return ParticleSet(ps, ego);
}

double bisect(double (*f)(double), double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(lo) < 0) == (f(mid) < 0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double prompt_advantage(double p) { return g_prompt(p, PreferenceConfig{}); }

}  // namespace

TEST_CASE("Bernoulli entropy and prompt advantage") {
  CHECK(bernoulli_entropy(0.5) == doctest::Approx(std::log(2.0)));
  CHECK(bernoulli_entropy(0.0) == 0.0);
  CHECK(bernoulli_entropy(1.0) == 0.0);
  CHECK(prompt_advantage(0.5) == doctest::Approx(0.5681).epsilon(1e-4));
  CHECK(prompt_advantage(1.0) == doctest::Approx(-0.125));
  const double p_star = bisect(prompt_advantage, 1e-9, 0.5);
  CHECK(p_star == doctest::Approx(0.027).epsilon(0.003 / 0.027));
  CHECK(bisect(prompt_advantage, 0.5, 1.0 - 1e-9) == doctest::Approx(1.0 - p_star).epsilon(1e-6));
  for (double p = 0.01; p < 0.5; p += 0.01) {
    CHECK(prompt_advantage(p) == doctest::Approx(prompt_advantage(1.0 - p)).epsilon(1e-12));
    const double h = 1e-4;
    CHECK(prompt_advantage(p + h) + prompt_advantage(p - h) - 2 * prompt_advantage(p) < 0.0);
    CHECK(prompt_advantage(p) < prompt_advantage(0.5));
  }
}

TEST_CASE("ideal predictions give H times the maximum") {
  const AgentModel m = quiet_model();
  const ParticleSet bel = point_belief(far_apart(), AgentId::A);
  Rng rng(1);
  const EfeBreakdown e = evaluate_efe(bel, Policy::constant(m.planner.horizon), {}, m, rng);
  CHECK(e.g_prag == doctest::Approx(m.planner.horizon * max_log_preference(m.pref)).epsilon(1e-12));
  CHECK(e.expected_log_pref.size() == static_cast<std::size_t>(m.planner.horizon));
}

TEST_CASE("signal epistemic value") {
  AgentModel m;
  Rng rng(2);
  const ParticleSet bel = ParticleSet::around(far_apart(), AgentId::A, 100, m.params.noise, rng);
  SUBCASE("no prompting carries no signal information") {
    const EfeBreakdown e = evaluate_efe(bel, Policy::constant(m.planner.horizon), {}, m, rng);
    CHECK(std::abs(e.g_epist_signal) < 1e-3);
  }
  SUBCASE("prompting at an even belief is worth ln 2") {
    ParticleSet even = bel;
    for (auto& p : even.particles()) p.state[AgentId::B].signal = {0.0, 0.5};
    const EfeBreakdown e = evaluate_efe(even, Policy::constant(1), SignalPlan{{true, false}}, m, rng);
    CHECK(e.g_epist_signal == doctest::Approx(std::log(2.0)).epsilon(1e-3));
  }
}

TEST_CASE("cross-entropy search finds a quadratic optimum") {
  const CemObjective obj = [](const std::vector<ControlInput>& u, Rng&) {
    double s = 0.0;
    for (const auto& x : u) s += (x.a + 2.0) * (x.a + 2.0) + 1e6 * x.omega * x.omega;
    return s;
  };
  const CemResult r = cem_minimize(obj, 20, CemConfig{}, KinematicLimits{}, 42);
  for (const auto& x : r.best) CHECK(x.a == doctest::Approx(-2.0).epsilon(0.1));
  for (std::size_t k = 1; k < r.best_per_iteration.size(); ++k) {
    CHECK(r.best_per_iteration[k] <= r.best_per_iteration[k - 1]);
  }
  const CemResult again = cem_minimize(obj, 20, CemConfig{}, KinematicLimits{}, 42);
  CHECK(again.best == r.best);
}

TEST_CASE("planned steering stays negligible and planning is seeded") {
  AgentModel m;
  Rng init(3);
  WorldState w;
  w[AgentId::A].kin = {-30.0, 0.0, 0.0, 0.0, 10.0};
  w[AgentId::B].kin = {0.0, -32.0, std::numbers::pi / 2, 0.0, 10.0};
  const ParticleSet bel = ParticleSet::around(w, AgentId::A, 100, m.params.noise, init);
  Rng r1(9), r2(9);
  const Policy p1 = cem_optimize(bel, {}, m, r1);
  const Policy p2 = cem_optimize(bel, {}, m, r2);
  CHECK(p1.controls == p2.controls);
  for (const auto& u : p1.controls) CHECK(std::abs(u.omega) < 0.01);
}

TEST_CASE("surprise accumulation") {
  SUBCASE("drift rate") {
    const SurpriseState s = initial_surprise(PlannerConfig{});
    CHECK(s.lambda == doctest::Approx(std::pow(10.0, -5.9)));
    CHECK(1e5 * s.lambda == doctest::Approx(0.1259).epsilon(1e-3));
  }
  const AgentModel m = quiet_model();
  const int h = m.planner.horizon;
  SUBCASE("ideal predictions leave E unchanged and extend the policy") {
    const ParticleSet bel = point_belief(far_apart(), AgentId::A);
    SurpriseState s = initial_surprise(m.planner);
    s.E = 0.4;
    Rng rng(5);
    const SelectionResult r = accumulate_and_select(s, bel, Policy::constant(h), {}, m, false, rng);
    CHECK(r.epsilon == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.surprise.E == doctest::Approx(0.4));
    CHECK_FALSE(r.replanned);
    CHECK(r.policy.horizon() == h);
  }
  SUBCASE("threshold crossing re-plans and resets") {
    // v = 10.2 costs 0.5 per step, so epsilon = 0.5 H.
    const ParticleSet bel = point_belief(far_apart(10.2), AgentId::A);
    std::vector<ControlInput> u(static_cast<std::size_t>(h));
    for (int t = 0; t < h; ++t) u[static_cast<std::size_t>(t)] = {0.0, 0.0};
    SurpriseState s;
    s.lambda = 0.13 / (0.5 * h);
    s.E = 0.5;
    Rng rng(6);
    const SelectionResult keep = accumulate_and_select(s, bel, Policy{u}, {}, m, false, rng);
    CHECK(keep.epsilon == doctest::Approx(0.5 * h).epsilon(1e-9));
    CHECK(keep.surprise.E == doctest::Approx(0.63));
    CHECK_FALSE(keep.replanned);
    for (int t = 0; t + 1 < h; ++t) CHECK(keep.policy.controls[static_cast<std::size_t>(t)] == u[static_cast<std::size_t>(t + 1)]);
    s.E = 0.95;
    const SelectionResult re = accumulate_and_select(s, bel, Policy{u}, {}, m, false, rng);
    CHECK(re.replanned);
    CHECK(re.surprise.E == 0.0);
  }
  SUBCASE("surprise is never negative and extension keeps the prefix") {
    AgentModel full;
    Rng rng(7);
    WorldState w;
    w[AgentId::A].kin = {-20.0, 0.0, 0.0, 0.0, 8.0};
    w[AgentId::B].kin = {0.0, -21.0, std::numbers::pi / 2, 0.0, 9.0};
    const ParticleSet bel = ParticleSet::around(w, AgentId::A, 100, full.params.noise, rng);
    for (int k = 0; k < 10; ++k) {
      std::vector<ControlInput> u(static_cast<std::size_t>(h));
      for (auto& x : u) x = {rng.normal(0.0, 1.0), 0.0};
      const SelectionResult r = accumulate_and_select(initial_surprise(full.planner), bel, Policy{u}, {}, full, false, rng);
      CHECK(r.epsilon >= 0.0);
      if (!r.replanned) {
        for (int t = 0; t + 1 < h; ++t) CHECK(r.policy.controls[static_cast<std::size_t>(t)] == u[static_cast<std::size_t>(t + 1)]);
      }
    }
  }
}

TEST_CASE("signal selection") {
  AgentModel m;
  m.params.norms.communication_enabled = true;
  m.params.norms.stop_signs_enabled = true;
  Rng rng(8);
  ParticleSet bel = ParticleSet::around(far_apart(), AgentId::A, 10, m.params.noise, rng);
  SUBCASE("uncertain yield intent while stopped: prompt") {
    const SignalPairBinary s = select_signals(bel, m, {0.5, 1.0});
    CHECK(s.prompting);
    CHECK_FALSE(s.yielding);
  }
  SUBCASE("before stopping the signal is too expensive") {
    CHECK_FALSE(select_signals(bel, m, {0.5, 0.0}).prompting);
  }
  SUBCASE("prompted while second: yield") {
    bel.signals().prompting = signal_posterior_update(bel.signals().prompting, true);
    CHECK(select_signals(bel, m, {0.0, 1.0}).yielding);
  }
  SUBCASE("holding priority: never yield") {
    bel.signals().prompting = signal_posterior_update(bel.signals().prompting, true);
    CHECK_FALSE(select_signals(bel, m, {1.0, 1.0}).yielding);
  }
  SUBCASE("no communication: nothing") {
    m.params.norms.communication_enabled = false;
    CHECK(select_signals(bel, m, {0.5, 1.0}) == SignalPairBinary{});
  }
}

TEST_CASE("signalling terms are charged on the first rollout step only") {
  AgentModel m = quiet_model();
  m.params.norms.communication_enabled = true;
  WorldState w = far_apart();
  w[AgentId::A].kin.x = -10.0;  // A clearly arrives first
  Rng rng(5);
  const EfeBreakdown e =
      evaluate_efe(point_belief(w, AgentId::A), Policy::constant(m.planner.horizon), SignalPlan{{false, true}}, m, rng);
  CHECK(e.components.coop == doctest::Approx(m.pref.g_W).epsilon(0.01));
  CHECK(e.components.comm == doctest::Approx(m.pref.g_gamma));
}
