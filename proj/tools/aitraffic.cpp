#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aitraffic/config.hpp"
#include "aitraffic/simulation.hpp"
#include "aitraffic/stats.hpp"

namespace fs = std::filesystem;
using namespace aitraffic;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

struct Manifest {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  int reps = 20;
  std::string regime;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool debug_particles = false;
  bool quiet = false;
};

ScenarioConfig resolve(const Manifest& m) {
  ScenarioConfig cfg;
  if (!m.config_path.empty()) {
    if (!fs::exists(m.config_path)) throw ConfigError("config file not found: " + m.config_path);
    cfg = load_config(m.config_path);
  }
  apply_overrides(cfg, m.overrides);
  if (!m.regime.empty()) set_value(cfg, "scenario.regime", m.regime);
  if (m.seed) cfg.seed = *m.seed;
  if (m.debug_particles) cfg.debug_particles = true;
  validate(cfg);
  return cfg;
}

nlohmann::json outcome_json(const Outcome& o) {
  nlohmann::json j;
  j["outcome"] = outcome_name(o.kind);
  j["t_cross_A"] = o.t_cross_a ? nlohmann::json(*o.t_cross_a) : nlohmann::json();
  j["t_cross_B"] = o.t_cross_b ? nlohmann::json(*o.t_cross_b) : nlohmann::json();
  j["min_gap"] = o.min_gap;
  j["impact_speed"] = o.impact_speed ? nlohmann::json(*o.impact_speed) : nlohmann::json();
  j["duration"] = o.duration;
  return j;
}

int cmd_run(const Manifest& m) {
  const ScenarioConfig cfg = resolve(m);
  const SimulationResult r = run_simulation(cfg);
  fs::create_directories(m.out_dir);
  const fs::path traj = fs::path(m.out_dir) / "trajectory.jsonl";
  const fs::path outc = fs::path(m.out_dir) / "outcome.json";
  {
    std::ofstream f(traj);
    if (!f) throw std::runtime_error("cannot write " + traj.string());
    write_trajectory_jsonl(f, r);
  }
  {
    std::ofstream f(outc);
    if (!f) throw std::runtime_error("cannot write " + outc.string());
    nlohmann::json j = outcome_json(r.outcome);
    j["regime"] = regime_name(cfg.regime);
    j["seed"] = cfg.seed;
    j["d_a0"] = cfg.d_a0;
    j["d_b0"] = cfg.d_b0;
    for (const auto& [id, times] : r.replan_times) j[std::string("replans_") + agent_name(id)] = times;
    f << j.dump(2) << '\n';
  }
  std::cout << "outcome " << outcome_name(r.outcome.kind) << " after " << r.outcome.duration << " s, min gap "
            << r.outcome.min_gap << " m\n";
  return kExitOk;
}

int cmd_batch(const Manifest& m) {
  const ScenarioConfig cfg = resolve(m);
  if (m.reps < 1) throw ConfigError("--reps must be at least 1");
  const ConditionGrid grid = default_grid(cfg.regime, m.reps);
  const int jobs = m.jobs > 0 ? m.jobs : std::max(1u, std::thread::hardware_concurrency());
  const std::size_t total = grid.delta_d0.size() * static_cast<std::size_t>(grid.repetitions);
  std::atomic<std::size_t> done{0};
  ProgressFn progress = [&](const RunRecord&) {
    const std::size_t d = ++done;
    if (!m.quiet) std::fprintf(stderr, "\r%zu/%zu runs", d, total);
  };

  std::signal(SIGINT, on_sigint);
  const BatchResult r = run_batch(grid, cfg, cfg.seed, jobs, &g_cancel, progress);
  std::signal(SIGINT, SIG_DFL);
  if (!m.quiet) std::fprintf(stderr, "\n");

  emit_outputs(r, m.out_dir);

  std::cout << "regime " << regime_name(grid.regime) << ", " << grid.repetitions << " repetitions\n";
  for (double d : grid.delta_d0) {
    std::cout << "dD0 " << d << ":";
    for (auto k : {OutcomeKind::AFirst, OutcomeKind::BFirst, OutcomeKind::Deadlock, OutcomeKind::Collision}) {
      const OutcomeRow* row = r.table.find(d, k);
      if (!row) continue;
      char buf[96];
      std::snprintf(buf, sizeof(buf), "  %s %d/%d [%.2f, %.2f]", outcome_name(k), row->count, row->n, row->wilson_lo,
                    row->wilson_hi);
      std::cout << buf;
    }
    std::cout << '\n';
  }
  const auto failed = std::count_if(r.raw.begin(), r.raw.end(), [](const RunRecord& x) { return !x.error.empty(); });
  if (r.interrupted) {
    std::cerr << "interrupted; partial results written to " << m.out_dir << '\n';
    return kExitRuntime;
  }
  if (failed > 0) {
    std::cerr << failed << " runs failed; see runs.jsonl\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_validate(const Manifest& m) {
  const ScenarioConfig cfg = resolve(m);
  const std::string text = serialize_config(cfg);
  // The printout must survive a round trip unchanged.
  const ScenarioConfig again = parse_config(text);
  validate(again);
  if (serialize_config(again) != text) {
    std::cerr << "config round trip mismatch\n";
    return kExitRuntime;
  }
  std::cout << text;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-vehicle active inference intersection simulator"};
  app.require_subcommand(1);
  Manifest m;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", m.config_path, "INI config file");
    sub->add_option("--override", m.overrides, "key=value, repeatable")->allow_extra_args(false);
    sub->add_option("--regime", m.regime, "baseline | norms | communication | norms+communication | adversarial");
    sub->add_option("--seed", m.seed, "base seed");
    sub->add_flag("--debug-particles", m.debug_particles, "log particle clouds in the trajectory");
    sub->add_flag("-q,--quiet", m.quiet, "no progress output");
  };

  CLI::App* run = app.add_subcommand("run", "single simulation");
  add_common(run);
  run->add_option("--out", m.out_dir, "output directory");

  CLI::App* batch = app.add_subcommand("batch", "Monte Carlo sweep over the initial distance difference");
  add_common(batch);
  batch->add_option("--out", m.out_dir, "output directory");
  batch->add_option("--reps", m.reps, "repetitions per condition");
  batch->add_option("--jobs", m.jobs, "worker threads (default: available cores)");

  CLI::App* val = app.add_subcommand("validate", "check and print the resolved config");
  add_common(val);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(m);
    if (batch->parsed()) return cmd_batch(m);
    return cmd_validate(m);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
