#include "aitraffic/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace aitraffic {

namespace {

constexpr OutcomeKind kKinds[] = {OutcomeKind::AFirst, OutcomeKind::BFirst, OutcomeKind::Deadlock,
                                  OutcomeKind::Collision};

bool same_delta(double a, double b) { return std::abs(a - b) < 1e-9; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<double> cooperative_deltas() { return {-25.0, -15.0, -5.0, -3.0, -1.5, 0.0}; }

std::vector<double> adversarial_deltas() { return {-10.0, -8.0, -6.0, -5.0, -4.5, -4.0, -3.0, -2.0, -1.0, 0.0}; }

ConditionGrid default_grid(Regime regime, int repetitions) {
  return ConditionGrid{regime, regime == Regime::Adversarial ? adversarial_deltas() : cooperative_deltas(), repetitions};
}

const OutcomeRow* OutcomeTable::find(double delta_d0, OutcomeKind kind) const {
  for (const auto& r : rows) {
    if (same_delta(r.delta_d0, delta_d0) && r.kind == kind) return &r;
  }
  return nullptr;
}

double OutcomeTable::prop(double delta_d0, OutcomeKind kind) const {
  const OutcomeRow* r = find(delta_d0, kind);
  return r ? r->prop : 0.0;
}

std::pair<double, double> wilson_interval(int k, int n, double z) {
  if (n <= 0) throw std::invalid_argument("wilson_interval: n must be positive");
  if (k < 0 || k > n) throw std::invalid_argument("wilson_interval: k must lie in [0, n]");
  const double nn = n;
  const double p = k / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  double lo = std::clamp(centre - half, 0.0, 1.0);
  double hi = std::clamp(centre + half, 0.0, 1.0);
  if (k == 0) lo = 0.0;
  if (k == n) hi = 1.0;
  return {lo, hi};
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t condition, int repetition) {
  return derive_seed(base_seed, static_cast<std::uint64_t>(condition), static_cast<std::uint64_t>(repetition));
}

ScenarioConfig condition_config(const ScenarioConfig& base, Regime regime, double delta_d0, std::uint64_t seed) {
  ScenarioConfig c = base;
  c.regime = regime;
  c.d_b0 = base.d_a0 + delta_d0;
  c.seed = seed;
  return c;
}

RunRecord summarize_run(const SimulationResult& r, double dt) {
  RunRecord rec;
  rec.outcome = r.outcome;
  if (auto it = r.replan_times.find(AgentId::A); it != r.replan_times.end()) rec.replans_a = it->second;
  if (auto it = r.replan_times.find(AgentId::B); it != r.replan_times.end()) rec.replans_b = it->second;
  std::vector<double> prompts[2];
  std::vector<double> yields[2];
  for (const auto& t : r.log) {
    if (t.epsilon < rec.max_epsilon_violation) rec.max_epsilon_violation = t.epsilon;
    if (t.scripted) continue;
    if (t.signals.prompting) prompts[index(t.agent)].push_back(t.t);
    if (t.signals.yielding) yields[index(t.agent)].push_back(t.t);
  }
  const double window = 2.0 + 0.5 * dt;
  for (int a = 0; a < 2 && !rec.prompt_then_yield; ++a) {
    for (double tp : prompts[a]) {
      const auto& ys = yields[1 - a];
      if (std::any_of(ys.begin(), ys.end(), [&](double ty) { return ty > tp && ty <= tp + window; })) {
        rec.prompt_then_yield = true;
        break;
      }
    }
  }
  return rec;
}

BatchResult run_batch(const ConditionGrid& grid, const ScenarioConfig& base, std::uint64_t base_seed, int jobs,
                      const std::atomic<bool>* cancel, const ProgressFn& progress) {
  if (grid.repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  BatchResult out;
  out.grid = grid;
  const std::size_t nc = grid.delta_d0.size();
  const std::size_t total = nc * static_cast<std::size_t>(grid.repetitions);
  std::vector<RunRecord> records(total);
  std::vector<char> done(total, 0);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;

  auto worker = [&]() {
    for (;;) {
      if (cancel && cancel->load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      const std::size_t c = i / static_cast<std::size_t>(grid.repetitions);
      const int rep = static_cast<int>(i % static_cast<std::size_t>(grid.repetitions));
      const std::uint64_t seed = run_seed(base_seed, c, rep);
      RunRecord rec;
      try {
        const ScenarioConfig cfg = condition_config(base, grid.regime, grid.delta_d0[c], seed);
        rec = summarize_run(run_simulation(cfg), cfg.dt());
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      rec.regime = grid.regime;
      rec.condition = c;
      rec.delta_d0 = grid.delta_d0[c];
      rec.repetition = rep;
      rec.seed = seed;
      records[i] = rec;
      done[i] = 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(rec);
      }
    }
  };

  const int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < total; ++i) {
    if (done[i]) {
      out.raw.push_back(std::move(records[i]));
    } else {
      out.interrupted = true;
    }
  }
  out.table = build_table(grid, out.raw);
  return out;
}

OutcomeTable build_table(const ConditionGrid& grid, const std::vector<RunRecord>& raw) {
  OutcomeTable t;
  for (std::size_t c = 0; c < grid.delta_d0.size(); ++c) {
    int counts[4] = {0, 0, 0, 0};
    int n = 0, failures = 0;
    for (const auto& r : raw) {
      if (r.condition != c) continue;
      if (!r.outcome) {
        ++failures;
        continue;
      }
      ++counts[static_cast<int>(r.outcome->kind)];
      ++n;
    }
    for (OutcomeKind k : kKinds) {
      OutcomeRow row;
      row.regime = grid.regime;
      row.delta_d0 = grid.delta_d0[c];
      row.kind = k;
      row.count = counts[static_cast<int>(k)];
      row.n = n;
      row.failures = failures;
      if (n > 0) {
        row.prop = static_cast<double>(row.count) / n;
        std::tie(row.wilson_lo, row.wilson_hi) = wilson_interval(row.count, n);
      }
      t.rows.push_back(row);
    }
  }
  return t;
}

void write_outcome_csv(std::ostream& os, const OutcomeTable& t) {
  os << "regime,delta_d0,kind,count,prop,wilson_lo,wilson_hi\n";
  os << std::setprecision(17);
  for (const auto& r : t.rows) {
    os << regime_name(r.regime) << ',' << r.delta_d0 << ',' << outcome_name(r.kind) << ',' << r.count << ','
       << r.prop << ',' << r.wilson_lo << ',' << r.wilson_hi << '\n';
  }
}

OutcomeTable read_outcome_csv(std::istream& is) {
  OutcomeTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("outcome CSV is empty");
  if (line != "regime,delta_d0,kind,count,prop,wilson_lo,wilson_hi") {
    throw std::runtime_error("unexpected outcome CSV header: " + line);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7) throw std::runtime_error("malformed outcome CSV row: " + line);
    OutcomeRow r;
    const auto regime = parse_regime(cells[0]);
    const auto kind = parse_outcome(cells[2]);
    if (!regime || !kind) throw std::runtime_error("unknown regime or kind in row: " + line);
    r.regime = *regime;
    r.delta_d0 = std::stod(cells[1]);
    r.kind = *kind;
    r.count = std::stoi(cells[3]);
    r.prop = std::stod(cells[4]);
    r.wilson_lo = std::stod(cells[5]);
    r.wilson_hi = std::stod(cells[6]);
    r.n = r.prop > 0.0 ? static_cast<int>(std::lround(r.count / r.prop)) : 0;
    t.rows.push_back(r);
  }
  // n is not stored per row; recover it from the condition's total count.
  for (auto& r : t.rows) {
    int n = 0;
    for (const auto& o : t.rows) {
      if (same_delta(o.delta_d0, r.delta_d0) && o.regime == r.regime) n += o.count;
    }
    r.n = n;
  }
  return t;
}

void write_raw_jsonl(std::ostream& os, const std::vector<RunRecord>& raw) {
  for (const auto& r : raw) {
    nlohmann::json j{{"regime", regime_name(r.regime)},
                     {"condition", r.condition},
                     {"delta_d0", r.delta_d0},
                     {"repetition", r.repetition},
                     {"seed", r.seed},
                     {"replans_A", r.replans_a},
                     {"replans_B", r.replans_b},
                     {"prompt_then_yield", r.prompt_then_yield}};
    if (r.outcome) {
      const Outcome& o = *r.outcome;
      j["outcome"] = outcome_name(o.kind);
      j["t_cross_A"] = o.t_cross_a ? nlohmann::json(*o.t_cross_a) : nlohmann::json(nullptr);
      j["t_cross_B"] = o.t_cross_b ? nlohmann::json(*o.t_cross_b) : nlohmann::json(nullptr);
      j["min_gap"] = o.min_gap;
      j["impact_speed"] = o.impact_speed ? nlohmann::json(*o.impact_speed) : nlohmann::json(nullptr);
      j["duration"] = o.duration;
    } else {
      j["outcome"] = nullptr;
      j["error"] = r.error;
    }
    os << j.dump() << '\n';
  }
}

void write_plot_csv(std::ostream& os, const BatchResult& r) {
  os << "regime,series,delta_d0,value,lo,hi\n";
  os << std::setprecision(17);
  for (const auto& row : r.table.rows) {
    os << regime_name(row.regime) << ",p_" << outcome_name(row.kind) << ',' << row.delta_d0 << ',' << row.prop << ','
       << row.wilson_lo << ',' << row.wilson_hi << '\n';
  }
  // Mean time of the modelled agent's first surprise-triggered re-plan (A).
  for (std::size_t c = 0; c < r.grid.delta_d0.size(); ++c) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& rec : r.raw) {
      if (rec.condition != c || rec.replans_a.empty()) continue;
      sum += rec.replans_a.front();
      sq += rec.replans_a.front() * rec.replans_a.front();
      ++n;
    }
    if (n == 0) continue;
    const double mean = sum / n;
    const double se = n > 1 ? std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1)) / n) : 0.0;
    os << regime_name(r.grid.regime) << ",first_replan_A," << r.grid.delta_d0[c] << ',' << mean << ','
       << mean - 1.96 * se << ',' << mean + 1.96 * se << '\n';
  }
}

void emit_outputs(const BatchResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot open " + p.string() + " for writing");
    return f;
  };
  {
    auto f = open(dir / "outcomes.csv");
    write_outcome_csv(f, r.table);
    if (!f) throw std::runtime_error("write failed: " + (dir / "outcomes.csv").string());
  }
  {
    auto f = open(dir / "runs.jsonl");
    write_raw_jsonl(f, r.raw);
    if (!f) throw std::runtime_error("write failed: " + (dir / "runs.jsonl").string());
  }
  {
    auto f = open(dir / "plot.csv");
    write_plot_csv(f, r);
    if (!f) throw std::runtime_error("write failed: " + (dir / "plot.csv").string());
  }
}

}  // namespace aitraffic
