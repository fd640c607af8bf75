#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aitraffic/belief.hpp"
#include "aitraffic/model.hpp"
#include "aitraffic/preference.hpp"

namespace aitraffic {

struct Policy {
  std::vector<ControlInput> controls;

  int horizon() const { return static_cast<int>(controls.size()); }
  static Policy constant(int horizon, ControlInput u = {}) {
    return {std::vector<ControlInput>(static_cast<std::size_t>(horizon), u)};
  }
};

/// Signals used inside an EFE rollout. They are chosen again on every tick, so
/// they act, and the signalling terms are charged, on the first step only.
struct SignalPlan {
  SignalPairBinary first;

  SignalPairBinary at(int step) const { return step == 0 ? first : SignalPairBinary{}; }
};

struct EfeBreakdown {
  double g_prag = 0.0;
  double g_epist = 0.0;
  double g_epist_signal = 0.0;
  PreferenceBreakdown components;           // summed over the horizon
  std::vector<double> expected_log_pref;    // E[ln p(o_tau)] per step
  double final_priority_prob = 0.5;         // P(ego leads) on the final step

  double G() const { return -g_prag - g_epist; }
};

struct CemConfig {
  int samples = 64;
  int iterations = 4;
  double elite_fraction = 0.125;
  double init_accel_std = 1.5;
  double init_omega_std = 1e-5;
  double min_accel_std = 0.05;
  double smoothing = 0.8;  // AR(1) coefficient of per-step sampling noise after iteration 1
  bool common_noise = true;  // score all candidates of an iteration on one rollout stream
};

struct PlannerConfig {
  int horizon = 20;
  double log10_lambda = -5.9;  // evidence accumulation drift rate, as a power of ten
  double replan_threshold = 1.0;
  int epistemic_obs_samples = 16;
  std::vector<double> extension_offsets{-1.0, -0.5, 0.0, 0.5, 1.0};
  CemConfig cem;
};

struct SurpriseState {
  double E = 0.0;
  double lambda = 1.2589254117941673e-06;  // 10^-5.9
  double threshold = 1.0;
};

SurpriseState initial_surprise(const PlannerConfig& cfg);

struct AgentModel {
  ModelParams params;
  PreferenceConfig pref;
  PlannerConfig planner;
};

double bernoulli_entropy(double p);

/// Epistemic advantage of prompting over not prompting, net of the signalling cost.
double g_prompt(double yield_belief_mean, const PreferenceConfig& cfg);

EfeBreakdown evaluate_efe(const ParticleSet& bel, const Policy& pi, const SignalPlan& signals, const AgentModel& model,
                          Rng& rng);

using CemObjective = std::function<double(const std::vector<ControlInput>&, Rng&)>;

struct CemResult {
  std::vector<ControlInput> best;
  double best_value = 0.0;
  std::vector<double> best_per_iteration;
};

/// Cross-entropy minimization over H-step control sequences. Candidate c of
/// iteration k is sampled from Rng(derive_seed(seed, k, c)). With common_noise
/// every candidate of iteration k is scored with Rng(derive_seed(seed, k, M)).
CemResult cem_minimize(const CemObjective& objective, int horizon, const CemConfig& cfg, const KinematicLimits& limits,
                       std::uint64_t seed, const std::vector<ControlInput>* warm_start = nullptr);

Policy cem_optimize(const ParticleSet& bel, const SignalPlan& signals, const AgentModel& model, Rng& rng,
                    const Policy* warm_start = nullptr);

struct SelectionResult {
  Policy policy;
  SurpriseState surprise;
  bool replanned = false;
  double epsilon = 0.0;
  EfeBreakdown efe;  // of the carried-over (extended) policy
};

/// Surprise accumulation and extension or re-planning. current_pi still holds
/// the action executed last tick in front; it is dropped here. force_replan
/// re-plans regardless of E.
SelectionResult accumulate_and_select(const SurpriseState& sur, const ParticleSet& bel, const Policy& current_pi,
                                      const SignalPlan& signals, const AgentModel& model, bool force_replan, Rng& rng);

struct SignalContext {
  double priority_prob = 0.5;  // P(ego leads)
  double ego_stopped_prob = 0.0;
};

/// Chooses prompting/yielding by one-step EFE over the four combinations.
SignalPairBinary select_signals(const ParticleSet& bel, const AgentModel& model, const SignalContext& ctx);

/// P(ego leads) used by select_signals: the believed priority flag under a
/// priority rule, otherwise the arrival-order sigmoid on predicted particles.
double priority_probability(const ParticleSet& bel, const EfeBreakdown& predicted, const AgentModel& model);

}  // namespace aitraffic
