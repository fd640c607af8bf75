#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aitraffic/simulation.hpp"

namespace aitraffic {

struct ConditionGrid {
  Regime regime = Regime::Baseline;
  std::vector<double> delta_d0;  // D_B(0) - D_A(0)
  int repetitions = 20;
};

std::vector<double> cooperative_deltas();
std::vector<double> adversarial_deltas();
ConditionGrid default_grid(Regime regime, int repetitions = 20);

struct RunRecord {
  Regime regime = Regime::Baseline;
  std::size_t condition = 0;
  double delta_d0 = 0.0;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::optional<Outcome> outcome;
  std::string error;
  std::vector<double> replans_a;  // surprise-triggered re-plan times
  std::vector<double> replans_b;
  bool prompt_then_yield = false;
  double max_epsilon_violation = 0.0;  // most negative epsilon seen, 0 if none
};

struct OutcomeRow {
  Regime regime = Regime::Baseline;
  double delta_d0 = 0.0;
  OutcomeKind kind = OutcomeKind::AFirst;
  int count = 0;
  int n = 0;
  double prop = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
  int failures = 0;
};

struct OutcomeTable {
  std::vector<OutcomeRow> rows;

  const OutcomeRow* find(double delta_d0, OutcomeKind kind) const;
  double prop(double delta_d0, OutcomeKind kind) const;
};

struct BatchResult {
  ConditionGrid grid;
  OutcomeTable table;
  std::vector<RunRecord> raw;
  bool interrupted = false;
};

std::pair<double, double> wilson_interval(int k, int n, double z = 1.96);

/// Seed of one run; independent of execution order.
std::uint64_t run_seed(std::uint64_t base_seed, std::size_t condition, int repetition);

/// Scenario for one grid cell: D_A(0) from `base`, D_B(0) = D_A(0) + delta.
ScenarioConfig condition_config(const ScenarioConfig& base, Regime regime, double delta_d0, std::uint64_t seed);

/// Summary of one finished run for the raw outcome list.
RunRecord summarize_run(const SimulationResult& r, double dt);

using ProgressFn = std::function<void(const RunRecord&)>;

BatchResult run_batch(const ConditionGrid& grid, const ScenarioConfig& base, std::uint64_t base_seed, int jobs = 1,
                      const std::atomic<bool>* cancel = nullptr, const ProgressFn& progress = {});

OutcomeTable build_table(const ConditionGrid& grid, const std::vector<RunRecord>& raw);

void write_outcome_csv(std::ostream& os, const OutcomeTable& t);
OutcomeTable read_outcome_csv(std::istream& is);
void write_raw_jsonl(std::ostream& os, const std::vector<RunRecord>& raw);
void write_plot_csv(std::ostream& os, const BatchResult& r);

/// Writes outcomes.csv, runs.jsonl and plot.csv into dir. Throws std::runtime_error naming the path on I/O failure.
void emit_outputs(const BatchResult& r, const std::filesystem::path& dir);

}  // namespace aitraffic
