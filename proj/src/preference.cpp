#include "aitraffic/preference.hpp"

#include <algorithm>
#include <cmath>

namespace aitraffic {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

}  // namespace

PreferenceBreakdown& PreferenceBreakdown::operator+=(const PreferenceBreakdown& o) {
  speed += o.speed;
  accel += o.accel;
  steer += o.steer;
  lateral += o.lateral;
  collision += o.collision;
  safety += o.safety;
  speed_limit += o.speed_limit;
  stop += o.stop;
  priority += o.priority;
  comm += o.comm;
  coop += o.coop;
  return *this;
}

PreferenceBreakdown& PreferenceBreakdown::operator*=(double k) {
  speed *= k;
  accel *= k;
  steer *= k;
  lateral *= k;
  collision *= k;
  safety *= k;
  speed_limit *= k;
  stop *= k;
  priority *= k;
  comm *= k;
  coop *= k;
  return *this;
}

double arrival_priority_prob(const VehicleState& ego, const VehicleState& other, AgentId ego_id, const Scene& scene,
                             double gain) {
  const double re = arrival_ratio(scene.d_long(ego_id, ego), ego.v);
  const double ro = arrival_ratio(scene.d_long(other_agent(ego_id), other), other.v);
  if (re == ro) return 0.5;
  const double diff = re - ro;
  if (std::isnan(diff)) return 0.5;
  return 1.0 / (1.0 + std::exp(-gain * diff));
}

PreferenceBreakdown preference_components(const BeliefState& o, AgentId ego, const PreferenceConfig& cfg,
                                          const NormConfig& norms, const Scene& scene,
                                          std::optional<double> priority_prob) {
  const AgentId w = other_agent(ego);
  const auto& e = o[ego];
  const auto& ow = o[w];
  PreferenceBreakdown b;

  b.speed = log_normal(e.kin.v, cfg.mu_v, cfg.sigma_v);
  b.accel = log_normal(e.control.a, 0.0, cfg.sigma_a);
  b.steer = log_normal(e.control.omega, 0.0, cfg.sigma_omega);
  const double d_lat = to_road_frame(e.kin, scene.frame(ego)).d_lat;
  b.lateral = std::max(cfg.lat_floor, -0.5 * (d_lat / cfg.lat_std) * (d_lat / cfg.lat_std));

  const VehicleGeometry& g = scene.geometry;
  const double dx = e.kin.x - ow.kin.x, dy = e.kin.y - ow.kin.y;
  const double reach = 2.0 * std::hypot(g.half_length(), g.half_width()) + cfg.safety_distance;
  if (dx * dx + dy * dy < reach * reach) {
    const double gap = rect_clearance(e.kin, ow.kin, g, g);
    if (gap <= 0.0) b.collision = cfg.g_C;
    b.safety = cfg.g_safe * std::max(0.0, 1.0 - gap / cfg.safety_distance);
  }

  const double d_ego = scene.d_long(ego, e.kin);
  const double d_other = scene.d_long(w, ow.kin);
  if (norms.general_enabled && e.kin.v > cfg.speed_limit_threshold) {
    b.speed_limit = cfg.g_S * (e.kin.v - cfg.speed_limit_offset) / cfg.speed_limit_scale;
  }
  if (norms.stop_signs_enabled && d_ego >= norms.intersection_entry && !e.has_stopped) b.stop = cfg.g_S;
  if (norms.priority_enabled && !e.has_priority &&
      d_ego > std::max(norms.intersection_entry, d_other - norms.trail_margin)) {
    const double other_not_yielding = norms.communication_enabled ? 1.0 - ow.signal.yielding : 1.0;
    b.priority = 0.5 * cfg.g_S * other_not_yielding;
  }

  if (!norms.communication_enabled) return b;
  const double multiplier = (norms.stop_signs_enabled && !e.has_stopped) ? cfg.prestop_signal_multiplier : 1.0;
  b.comm = cfg.g_gamma * (e.signal.prompting + e.signal.yielding) * multiplier;

  double p_ego;
  if (priority_prob) {
    p_ego = *priority_prob;
  } else if (norms.priority_enabled) {
    p_ego = e.has_priority ? 1.0 : 0.0;
  } else {
    p_ego = arrival_priority_prob(e.kin, ow.kin, ego, scene, cfg.arrival_sigmoid_gain);
  }
  const double y = e.signal.yielding;
  b.coop = cfg.g_W * (y * p_ego + ow.signal.prompting * (1.0 - p_ego) * (1.0 - y));
  return b;
}

PreferenceBreakdown preference_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg,
                                          const NormConfig& norms, const Scene& scene) {
  return preference_components(to_belief_state(o), ego, cfg, norms, scene);
}

double log_preference(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                      const Scene& scene) {
  return preference_components(o, ego, cfg, norms, scene).total();
}

double log_norm_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                           const Scene& scene) {
  const auto b = preference_components(o, ego, cfg, norms, scene);
  return b.speed_limit + b.stop + b.priority;
}

double log_comm_components(const WorldState& o, AgentId ego, const PreferenceConfig& cfg, const NormConfig& norms,
                           const Scene& scene) {
  const auto b = preference_components(o, ego, cfg, norms, scene);
  return b.comm + b.coop;
}

double max_log_preference(const PreferenceConfig& cfg) {
  return -3.0 * kLogSqrt2Pi - std::log(cfg.sigma_v) - std::log(cfg.sigma_a) - std::log(cfg.sigma_omega);
}

}  // namespace aitraffic
