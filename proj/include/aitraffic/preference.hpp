#pragma once

#include <optional>

#include "aitraffic/model.hpp"

namespace aitraffic {

struct PreferenceConfig {
  double mu_v = 10.0;
  double sigma_v = 0.2;
  double sigma_a = 0.2;
  double sigma_omega = 0.02;
  double g_S = -10000.0;
  double g_gamma = -0.125;
  double g_W = -10000.0;
  double g_C = -100000.0;
  double g_safe = -10000.0;
  double safety_distance = 2.0;
  double lat_std = 0.3;
  double lat_floor = -50.0;
  double speed_limit_threshold = 10.278;
  double speed_limit_offset = 10.0;
  double speed_limit_scale = 4.2;
  double prestop_signal_multiplier = 10.0;
  double arrival_sigmoid_gain = 3.0;
};

/// Log-preference components; total() is ln p(o).
struct PreferenceBreakdown {
  double speed = 0.0;
  double accel = 0.0;
  double steer = 0.0;
  double lateral = 0.0;
  double collision = 0.0;
  double safety = 0.0;
  double speed_limit = 0.0;
  double stop = 0.0;
  double priority = 0.0;
  double comm = 0.0;
  double coop = 0.0;

  double total() const {
    return speed + accel + steer + lateral + collision + safety + speed_limit + stop + priority + comm + coop;
  }
  double kinematic() const { return speed + accel + steer + lateral; }
  PreferenceBreakdown& operator+=(const PreferenceBreakdown& o);
  PreferenceBreakdown& operator*=(double k);
};

/// sigmoid(k * (r_ego - r_other)) on arrival ratios: the chance that the ego
/// is taken to arrive first when no priority rule is in force.
double arrival_priority_prob(const VehicleState& ego, const VehicleState& other, AgentId ego_id, const Scene& scene,
                             double gain);

/// Components for an observation whose signal entries are probabilities of the
/// observed bit being 1. Every term is multilinear in those bits, so this is the
/// exact expectation over independent Bernoulli signal observations. When
/// priority_prob is empty the ego's priority flag comes from the observation in
/// priority regimes and from arrival_priority_prob otherwise.
PreferenceBreakdown preference_components(const BeliefState& o, AgentId ego, const PreferenceConfig& cfg,
                                          const NormConfig& norms, const Scene& scene,
                                          std::optional<double> priority_prob = std::nullopt);

PreferenceBreakdown preference_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg,
                                          const NormConfig& norms, const Scene& scene);

double log_preference(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                      const Scene& scene);

/// Speed-limit, stop and priority terms.
double log_norm_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                           const Scene& scene);

/// Signalling cost and cooperation terms.
double log_comm_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                           const Scene& scene);

/// max over o of ln p(o), attained at v = mu_v, a = 0, omega = 0, centred, no conflict.
double max_log_preference(const PreferenceConfig& cfg);

}  // namespace aitraffic
