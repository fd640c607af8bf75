// Acceptance suite: prints one PASS/FAIL line per criterion.
// ACCEPTANCE_REPS and ACCEPTANCE_JOBS override the repetitions per condition
// (default 20) and the worker count (default: hardware threads).

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aitraffic/stats.hpp"

using namespace aitraffic;

namespace {

constexpr std::uint64_t kBaseSeed = 20240601;

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  return v ? std::max(1, std::atoi(v)) : fallback;
}

struct Job {
  Regime regime;
  std::size_t condition;
  double delta;
  int rep;
};

struct Key {
  Regime regime;
  double delta;
  bool operator<(const Key& o) const { return std::tie(regime, delta) < std::tie(o.regime, o.delta); }
};

using Results = std::map<Key, std::vector<RunRecord>>;

std::size_t condition_index(Regime r, double delta) {
  const auto g = default_grid(r).delta_d0;
  return static_cast<std::size_t>(std::find(g.begin(), g.end(), delta) - g.begin());
}

Results run_jobs(const std::vector<Job>& jobs, int threads) {
  std::vector<RunRecord> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
      const Job& j = jobs[i];
      const std::uint64_t seed = run_seed(kBaseSeed, j.condition, j.rep);
      RunRecord rec;
      try {
        const ScenarioConfig cfg = condition_config(ScenarioConfig{}, j.regime, j.delta, seed);
        rec = summarize_run(run_simulation(cfg), cfg.dt());
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      rec.regime = j.regime;
      rec.condition = j.condition;
      rec.delta_d0 = j.delta;
      rec.repetition = j.rep;
      rec.seed = seed;
      out[i] = std::move(rec);
      const std::size_t n = ++done;
      if (n % 25 == 0) {
        std::lock_guard<std::mutex> lock(io);
        std::fprintf(stderr, "  %zu/%zu runs\n", n, jobs.size());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  Results res;
  for (auto& r : out) res[{r.regime, r.delta_d0}].push_back(std::move(r));
  return res;
}

double prop(const std::vector<RunRecord>& runs, OutcomeKind k) {
  if (runs.empty()) return 0.0;
  const auto n = std::count_if(runs.begin(), runs.end(), [&](const RunRecord& r) { return r.outcome && r.outcome->kind == k; });
  return static_cast<double>(n) / static_cast<double>(runs.size());
}

int failures(const std::vector<RunRecord>& runs) {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunRecord& r) { return !r.outcome; }));
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void print_table(const Results& res) {
  for (const auto& [key, runs] : res) {
    std::printf("  %-20s dD0=%6.1f n=%2zu  A %.2f  B %.2f  D %.2f  C %.2f  failed %d\n", regime_name(key.regime),
                key.delta, runs.size(), prop(runs, OutcomeKind::AFirst), prop(runs, OutcomeKind::BFirst),
                prop(runs, OutcomeKind::Deadlock), prop(runs, OutcomeKind::Collision), failures(runs));
  }
}

bool report(int n, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  return ok;
}

int run_doctest(int argc, char** argv, const char* option, const char* value) {
  doctest::Context ctx(argc, argv);
  ctx.setOption(option, value);
  ctx.setOption("minimal", true);
  return ctx.run();
}

// Deadlock flags of paired runs (same seed, same condition index).
std::map<int, bool> deadlock_by_rep(const std::vector<RunRecord>& runs) {
  std::map<int, bool> m;
  for (const auto& r : runs) m[r.repetition] = r.outcome && r.outcome->kind == OutcomeKind::Deadlock;
  return m;
}

double mean_first_replan(const std::vector<RunRecord>& runs, int* n) {
  double s = 0.0;
  *n = 0;
  for (const auto& r : runs) {
    if (r.replans_a.empty()) continue;
    s += r.replans_a.front();
    ++*n;
  }
  return *n ? s / *n : std::nan("");
}

OutcomeKind swapped(OutcomeKind k) {
  if (k == OutcomeKind::AFirst) return OutcomeKind::BFirst;
  if (k == OutcomeKind::BFirst) return OutcomeKind::AFirst;
  return k;
}

// Outcome equivariance under A<->B relabelling. Trajectories are compared for
// the record only: rounding in the heading of B is amplified by the planner.
bool mirrored(const SimulationResult& a, const SimulationResult& b, double* worst) {
  *worst = 0.0;
  const std::size_t n = std::min(a.trajectory.size(), b.trajectory.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = a.trajectory[i];
    const auto& q = b.trajectory[i];
    *worst = std::max({*worst, std::abs(p[AgentId::A].kin.x - q[AgentId::B].kin.y),
                       std::abs(p[AgentId::B].kin.y - q[AgentId::A].kin.x)});
  }
  return b.outcome.kind == swapped(a.outcome.kind);
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = env_int("ACCEPTANCE_REPS", 20);
  const int threads = env_int("ACCEPTANCE_JOBS", static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  bool all = true;

  all &= report(1, run_doctest(argc, argv, "test-suite-exclude", "invariants") == 0, "unit and oracle cases");

  std::vector<Job> jobs;
  auto add = [&](Regime r, double d, int n) {
    for (int k = 0; k < n; ++k) jobs.push_back({r, condition_index(r, d), d, k});
  };
  for (double d : {-25.0, -15.0, 0.0}) add(Regime::Baseline, d, reps);
  add(Regime::Baseline, -5.0, 1);
  for (double d : cooperative_deltas()) add(Regime::Norms, d, reps);
  for (double d : cooperative_deltas()) add(Regime::Communication, d, reps);
  add(Regime::NormsCommunication, 0.0, reps);
  for (double d : {-8.0, -4.5, -4.0, -1.0}) add(Regime::Adversarial, d, reps);
  std::fprintf(stderr, "running %zu simulations on %d threads\n", jobs.size(), threads);
  const Results res = run_jobs(jobs, threads);
  print_table(res);
  auto runs = [&](Regime r, double d) -> const std::vector<RunRecord>& { return res.at({r, d}); };

  {
    const bool unit = run_doctest(argc, argv, "test-suite", "invariants") == 0;
    double worst_eps = 0.0;
    std::size_t n_runs = 0;
    int failed = 0;
    for (const auto& [k, rs] : res) {
      for (const auto& r : rs) {
        worst_eps = std::min(worst_eps, r.max_epsilon_violation);
        n_runs += r.outcome.has_value();
      }
      failed += failures(rs);
    }
    ScenarioConfig sym;
    sym.seed = 77;
    sym.max_time = 12.0;
    const SimulationResult m1 = run_simulation(sym);
    sym.swap_agent_streams = true;
    const SimulationResult m2 = run_simulation(sym);
    double worst_mirror = 0.0;
    const bool mirror = mirrored(m1, m2, &worst_mirror);
    std::ostringstream d;
    d << "invariant cases " << (unit ? "ok" : "failed") << ", min epsilon " << worst_eps << " over " << n_runs
      << " runs (" << failed << " failed), mirror deviation " << worst_mirror << " (" << outcome_name(m1.outcome.kind)
      << " vs " << outcome_name(m2.outcome.kind) << ")";
    all &= report(2, unit && worst_eps >= -1e-6 && n_runs >= 100 && failed == 0 && mirror, d.str());
  }

  {
    const double a25 = prop(runs(Regime::Baseline, -25.0), OutcomeKind::AFirst);
    const double a15 = prop(runs(Regime::Baseline, -15.0), OutcomeKind::AFirst);
    const double d0 = prop(runs(Regime::Baseline, 0.0), OutcomeKind::Deadlock);
    const double d25 = prop(runs(Regime::Baseline, -25.0), OutcomeKind::Deadlock);
    const bool ok = a25 >= 0.9 && a15 >= 0.9 && d0 >= 0.2 && d0 <= 0.8 && d0 > d25 && d25 <= 0.05;
    all &= report(3, ok,
                  fmt("AFirst(-25)=%.2f", a25) + fmt(" AFirst(-15)=%.2f", a15) + fmt(" deadlock(0)=%.2f", d0) +
                      fmt(" deadlock(-25)=%.2f", d25));
  }

  const double norms_d0 = prop(runs(Regime::Norms, 0.0), OutcomeKind::Deadlock);
  {
    const double base_d0 = prop(runs(Regime::Baseline, 0.0), OutcomeKind::Deadlock);
    const auto bp = deadlock_by_rep(runs(Regime::Baseline, 0.0));
    const auto np = deadlock_by_rep(runs(Regime::Norms, 0.0));
    int paired = 0, nb = 0, nn = 0;
    for (const auto& [rep, dl] : bp) {
      if (!np.count(rep)) continue;
      ++paired;
      nb += dl;
      nn += np.at(rep);
    }
    int coll = 0, total = 0;
    for (double d : cooperative_deltas()) {
      for (const auto& r : runs(Regime::Norms, d)) {
        ++total;
        coll += r.outcome && r.outcome->kind == OutcomeKind::Collision;
      }
    }
    const double cp = total ? static_cast<double>(coll) / total : 1.0;
    const bool ok = paired > 0 && nn < nb && norms_d0 <= 0.45 && cp <= 0.05;
    std::ostringstream d;
    d << "deadlock(0) norms " << norms_d0 << " vs baseline " << base_d0 << " on " << paired
      << " paired seeds, grid collision " << cp;
    all &= report(4, ok, d.str());
  }

  {
    double worst = 0.0;
    bool pattern = false;
    for (double d : cooperative_deltas()) {
      const auto& rs = runs(Regime::Communication, d);
      worst = std::max(worst, prop(rs, OutcomeKind::Deadlock) + prop(rs, OutcomeKind::Collision));
      for (const auto& r : rs) pattern |= r.prompt_then_yield;
    }
    all &= report(5, worst <= 0.05 && pattern,
                  fmt("max deadlock+collision %.2f", worst) + (pattern ? ", prompt then yield seen" : ", no prompt-yield pair"));
  }

  {
    const double nc = prop(runs(Regime::NormsCommunication, 0.0), OutcomeKind::Deadlock);
    all &= report(6, nc <= 0.1 && nc <= norms_d0, fmt("deadlock(0) %.2f", nc) + fmt(" vs norms %.2f", norms_d0));
  }

  {
    const double c8 = prop(runs(Regime::Adversarial, -8.0), OutcomeKind::Collision);
    const double c45 = prop(runs(Regime::Adversarial, -4.5), OutcomeKind::Collision);
    const double c1 = prop(runs(Regime::Adversarial, -1.0), OutcomeKind::Collision);
    std::vector<RunRecord> band = runs(Regime::Adversarial, -4.5);
    for (const auto& r : runs(Regime::Adversarial, -4.0)) band.push_back(r);
    int nb = 0, n1 = 0;
    const double t_band = mean_first_replan(band, &nb);
    const double t1 = mean_first_replan(runs(Regime::Adversarial, -1.0), &n1);
    const bool ok = c45 > c8 && c45 > c1 && nb > 0 && n1 > 0 && t_band > t1;
    all &= report(7, ok,
                  fmt("collision -8: %.2f", c8) + fmt(" -4.5: %.2f", c45) + fmt(" -1: %.2f", c1) +
                      fmt("; first replan band %.2f s", t_band) + fmt(" vs -1: %.2f s", t1));
  }

  {
    const RunRecord& lead = runs(Regime::Baseline, -5.0).front();
    const bool trailing_first =
        !lead.replans_b.empty() && (lead.replans_a.empty() || lead.replans_b.front() < lead.replans_a.front());
    std::string d = "dD0=-5 first replans A " +
                    (lead.replans_a.empty() ? std::string("none") : fmt("%.1f s", lead.replans_a.front())) + ", B " +
                    (lead.replans_b.empty() ? std::string("none") : fmt("%.1f s", lead.replans_b.front()));
    bool worsening = false;
    int examined = 0;
    for (const auto& r : runs(Regime::Adversarial, -4.0)) {
      if (!r.outcome || r.outcome->kind != OutcomeKind::Collision) continue;
      const ScenarioConfig cfg = condition_config(ScenarioConfig{}, Regime::Adversarial, -4.0, r.seed);
      const SimulationResult sim = run_simulation(cfg);
      const std::vector<double>& replans = sim.replan_times.at(AgentId::A);
      std::map<long, double> coll;
      for (const auto& t : sim.log) {
        if (t.agent == AgentId::A) coll[std::lround(t.t / cfg.dt())] = t.pragmatic.collision;
      }
      if (replans.size() < 2) continue;
      ++examined;
      const long second = std::lround(replans[1] / cfg.dt());
      const long window = std::lround(1.0 / cfg.dt());
      bool mono = second - window >= 0;
      for (long k = second - window + 1; mono && k < second; ++k) mono = coll.at(k) <= coll.at(k - 1);
      mono = mono && coll.at(second - 1) < coll.at(second - window);
      if (mono) {
        worsening = true;
        d += "; adversarial seed " + std::to_string(r.seed) + fmt(" second replan %.1f s", replans[1]) +
             ", collision term worsening over the preceding 1 s";
        break;
      }
    }
    if (!worsening) d += "; no adversarial -4 m collision run with a worsening collision term (" + std::to_string(examined) + " with two replans)";
    all &= report(8, trailing_first && worsening, d);
  }

  return all ? 0 : 1;
}
