#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "aitraffic/kinematics.hpp"
#include "aitraffic/rng.hpp"

namespace aitraffic {

enum class AgentId : int { A = 0, B = 1 };

constexpr std::size_t index(AgentId id) { return static_cast<std::size_t>(id); }
constexpr AgentId other_agent(AgentId id) { return id == AgentId::A ? AgentId::B : AgentId::A; }
inline const char* agent_name(AgentId id) { return id == AgentId::A ? "A" : "B"; }

/// Signals as they exist in the world, in observations and in actions.
struct SignalPairBinary {
  bool prompting = false;
  bool yielding = false;

  friend bool operator==(const SignalPairBinary&, const SignalPairBinary&) = default;
};

/// Signals as they exist inside an agent's belief, on [0,1].
struct SignalPairBelief {
  double prompting = 0.0;
  double yielding = 0.0;

  friend bool operator==(const SignalPairBelief&, const SignalPairBelief&) = default;
};

template <class Signal>
struct AgentWorldStateT {
  VehicleState kin;
  Signal signal;
  ControlInput control;
  bool has_stopped = false;   // h
  bool has_priority = false;  // p

  friend bool operator==(const AgentWorldStateT&, const AgentWorldStateT&) = default;
};

template <class Signal>
struct FullStateT {
  std::array<AgentWorldStateT<Signal>, 2> agents;

  AgentWorldStateT<Signal>& operator[](AgentId id) { return agents[index(id)]; }
  const AgentWorldStateT<Signal>& operator[](AgentId id) const { return agents[index(id)]; }

  friend bool operator==(const FullStateT&, const FullStateT&) = default;
};

using AgentWorldState = AgentWorldStateT<SignalPairBinary>;
using AgentBeliefState = AgentWorldStateT<SignalPairBelief>;
/// Process state and observations (binary signals).
using WorldState = FullStateT<SignalPairBinary>;
/// Particle state of a belief (continuous signals).
using BeliefState = FullStateT<SignalPairBelief>;

struct AgentAction {
  ControlInput control;
  SignalPairBinary signal;

  friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

struct KinematicStd {
  double x, y, theta, delta, v;
};

struct ControlStd {
  double a, omega;
};

struct NoiseConfig {
  KinematicStd sigma_x_ego{0.05, 0.05, 0.005, 0.005, 0.01};
  KinematicStd sigma_x_ov{0.05, 0.05, 0.005, 0.005, 0.05};
  ControlStd sigma_u_ov{0.3, 0.01};
  KinematicStd sigma_x_o{0.1, 0.1, 0.01, 0.01, 0.03};
  ControlStd sigma_u_o{0.2, 0.01};
  double sigma_gamma = 0.001;    // signal noise during behaviour prediction
  double sigma_gamma_0 = 0.005;  // signal noise during belief update

  static NoiseConfig zero();
};

struct NormConfig {
  bool general_enabled = true;  // lane following + speed limit
  bool stop_signs_enabled = false;
  bool priority_enabled = false;
  bool communication_enabled = false;

  double speed_limit = 11.5;
  double stop_region_begin = -19.425;
  double intersection_entry = -3.925;
  double stop_speed = 0.278;
  double trail_margin = 4.425;
  double priority_handover = -20.0;
  double violation_prob = 0.02;
  double coop_slope = 1.4;
  double coop_offset = 0.3;
  double coop_floor = 0.001;
  double lane_heading_tolerance = 0.35;
  int projection_steps = 20;  // H_n

  bool any_enabled() const {
    return general_enabled || stop_signs_enabled || priority_enabled || communication_enabled;
  }
  /// Rollout indices at which the projected normative probability is evaluated.
  std::array<int, 3> projection_indices() const;
};

struct Scene {
  std::array<RoadFrame, 2> frames{RoadFrame(0.0), RoadFrame(1.5707963267948966)};
  VehicleGeometry geometry;
  KinematicLimits limits;
  double dt = 0.2;

  const RoadFrame& frame(AgentId id) const { return frames[index(id)]; }
  double d_long(AgentId id, const VehicleState& s) const { return longitudinal(s, frame(id)); }
};

struct ModelParams {
  NoiseConfig noise;
  NormConfig norms;
  Scene scene;
};

// --- generative process -----------------------------------------------------

/// Deterministic world update; throws std::invalid_argument if an agent has no action.
WorldState process_step(const WorldState& eta, const std::map<AgentId, AgentAction>& actions,
                        const ModelParams& params);

/// Observation of the process; the identity map.
inline WorldState process_observe(const WorldState& eta) { return eta; }

// --- boolean state transitions ------------------------------------------------

bool update_h(const VehicleState& next, bool h, const RoadFrame& frame, const NormConfig& norms);

struct PriorityInputs {
  double d_ego_prev;
  double d_ego_next;
  double v_ego_next;
  double d_other_next;
  double v_other_next;
  bool h_ego_prev;
  bool h_ego_next;
};

bool update_priority(const PriorityInputs& in, bool p, const NormConfig& norms);

/// d / max(0, v); a stopped vehicle gives -inf before the centre and +inf past it.
double arrival_ratio(double d_long, double v);

template <class Signal>
bool update_priority(const FullStateT<Signal>& next, const FullStateT<Signal>& prev, bool p, AgentId ego,
                     const ModelParams& params) {
  const AgentId w = other_agent(ego);
  const Scene& sc = params.scene;
  return update_priority(PriorityInputs{sc.d_long(ego, prev[ego].kin), sc.d_long(ego, next[ego].kin),
                                        next[ego].kin.v, sc.d_long(w, next[w].kin), next[w].kin.v,
                                        prev[ego].has_stopped, next[ego].has_stopped},
                         p, params.norms);
}

// --- generative model -------------------------------------------------------

/// Normal truncated to (lo, hi), by rejection; falls back to the clamped mean.
double truncated_normal(double mean, double stddev, double lo, double hi, Rng& rng);

SignalPairBelief signal_transition(const SignalPairBelief& gamma, bool prompting, double sigma_gamma, Rng& rng);

double normative_prob(const BeliefState& s, AgentId ego, const ModelParams& params);

/// min{ p_n(s_next), harmonic mean of p_n over the projection rollout }.
/// The rollout starts at s_next; the ego follows ego_tail (its last entry is
/// held once exhausted), every other agent holds its believed control.
double projected_normative(const BeliefState& s_next, AgentId ego, std::span<const ControlInput> ego_tail,
                           const ModelParams& params);

/// Harmonic-mean/min combination used by projected_normative.
double combine_projected(double pn_now, std::span<const double> rollout_values);

struct TransitionSample {
  BeliefState next;
  double weight = 1.0;
};

struct TransitionOptions {
  double sigma_gamma = 0.001;
  bool apply_norms = true;
};

/// One draw from p_0(s'|s,a) plus the projected-normative importance weight.
TransitionSample model_transition_sample(const BeliefState& s, const AgentAction& ego_action, AgentId ego,
                                         const ModelParams& params, std::span<const ControlInput> ego_tail,
                                         const TransitionOptions& options, Rng& rng);

/// log p(o|s) for agent `ego`. Returns -inf for impossible signal observations.
double observation_loglik(const WorldState& o, const BeliefState& s, AgentId ego, const NoiseConfig& noise);

/// Draw o ~ p(o|s).
WorldState sample_observation(const BeliefState& s, AgentId ego, const NoiseConfig& noise, Rng& rng);

/// Lift a world state into belief space (binary signals become 0/1).
BeliefState to_belief_state(const WorldState& w);

}  // namespace aitraffic
