#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aitraffic/belief.hpp"
#include "aitraffic/policy.hpp"

namespace aitraffic {

enum class Regime { Baseline, Norms, Communication, NormsCommunication, Adversarial };

const char* regime_name(Regime r);
std::optional<Regime> parse_regime(const std::string& s);
/// Norm flags used by the agents in each regime.
void apply_regime(Regime r, NormConfig& norms);

struct ScenarioConfig {
  double d_a0 = -65.0;
  double d_b0 = -65.0;
  double v0 = 10.0;
  double max_time = 40.0;
  Regime regime = Regime::Baseline;
  std::uint64_t seed = 1;
  bool swap_agent_streams = false;
  bool stop_at_first_crossing = true;
  double deadlock_speed = 0.1;
  double deadlock_time = 5.0;
  double standstill_speed = 0.1;
  double standstill_replan_time = 2.0;
  bool debug_particles = false;

  AgentModel model;
  BeliefConfig belief;

  bool adversarial_b() const { return regime == Regime::Adversarial; }
  double dt() const { return model.params.scene.dt; }
};

enum class OutcomeKind { AFirst, BFirst, Deadlock, Collision };
const char* outcome_name(OutcomeKind k);
std::optional<OutcomeKind> parse_outcome(const std::string& s);

struct Outcome {
  OutcomeKind kind = OutcomeKind::Deadlock;
  std::optional<double> t_cross_a;
  std::optional<double> t_cross_b;
  double min_gap = 0.0;
  std::optional<double> impact_speed;
  double duration = 0.0;
};

/// Incremental outcome classification over a sequence of world states.
class OutcomeTracker {
 public:
  OutcomeTracker(const Scene& scene, double deadlock_speed, double deadlock_time, double dt);

  void observe(const WorldState& w, double t);
  /// True once the outcome can no longer change.
  bool decided(bool stop_at_first_crossing) const;
  Outcome result(double t_end) const;
  double crossing_distance() const { return cross_d_; }

 private:
  Scene scene_;
  double deadlock_speed_, deadlock_time_, dt_;
  double cross_d_;
  Outcome out_;
  bool collided_ = false;
  bool deadlocked_ = false;
  double still_since_ = -1.0;
};

/// Collision dominates; otherwise the first agent whose rear edge clears the
/// conflict zone; otherwise Deadlock.
Outcome classify_outcome(const std::vector<WorldState>& trajectory, const ScenarioConfig& cfg);

AgentAction adversarial_action();

struct AgentRuntime {
  AgentId id = AgentId::A;
  ParticleSet belief;
  Policy policy;
  SurpriseState surprise;
  SignalPairBinary signals_out;
  Rng rng;
  double standstill_time = 0.0;
  double prev_yield_mean = 0.5;
  EfeBreakdown last_efe;
  AgentAction last_action;
  bool started = false;
  int degenerate_resets = 0;
  std::vector<double> replan_times;
};

struct TickRecord {
  double t = 0.0;
  AgentId agent = AgentId::A;
  VehicleState kin;
  ControlInput control;
  SignalPairBinary signals;
  VehicleState other_mean;
  double yield_belief = 0.0;
  double prompt_belief = 0.0;
  double E = 0.0;
  double epsilon = 0.0;
  bool replanned = false;
  bool scripted = false;
  double priority_prob = 0.5;
  double g_prompt = 0.0;
  PreferenceBreakdown pragmatic;
  double g_epist = 0.0;
  std::vector<BeliefState> particles;  // only with debug_particles
};

struct SimulationResult {
  Outcome outcome;
  std::vector<WorldState> trajectory;
  std::vector<TickRecord> log;
  std::map<AgentId, std::vector<double>> replan_times;
};

WorldState initial_world(const ScenarioConfig& cfg);

std::map<AgentId, AgentRuntime> make_agents(const WorldState& world, const ScenarioConfig& cfg);

/// One tick of the perception-action cycle for both agents followed by a
/// simultaneous world update. Appends one record per agent to `log` if given.
WorldState run_step(const WorldState& world, std::map<AgentId, AgentRuntime>& agents, const ScenarioConfig& cfg,
                    double t, std::vector<TickRecord>* log);

SimulationResult run_simulation(const ScenarioConfig& cfg);

void write_trajectory_jsonl(std::ostream& os, const SimulationResult& r);

}  // namespace aitraffic
