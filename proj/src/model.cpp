#include "aitraffic/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace aitraffic {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double gaussian_logpdf(double x, double mean, double stddev) {
  if (stddev <= 0.0) return x == mean ? 0.0 : -std::numeric_limits<double>::infinity();
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - kLogSqrt2Pi;
}

double bernoulli_logpmf(bool observed, double p) {
  const double q = observed ? p : 1.0 - p;
  return q > 0.0 ? std::log(q) : -std::numeric_limits<double>::infinity();
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

void add_noise(VehicleState& s, const KinematicStd& sd, Rng& rng) {
  s.x = rng.normal(s.x, sd.x);
  s.y = rng.normal(s.y, sd.y);
  s.theta = rng.normal(s.theta, sd.theta);
  s.delta = rng.normal(s.delta, sd.delta);
  s.v = rng.normal(s.v, sd.v);
}

double pow10(double g) {
  const double g2 = g * g;
  const double g4 = g2 * g2;
  return g4 * g4 * g2;
}

}  // namespace

NoiseConfig NoiseConfig::zero() {
  NoiseConfig n;
  n.sigma_x_ego = n.sigma_x_ov = n.sigma_x_o = {0, 0, 0, 0, 0};
  n.sigma_u_ov = n.sigma_u_o = {0, 0};
  n.sigma_gamma = n.sigma_gamma_0 = 0.0;
  return n;
}

std::array<int, 3> NormConfig::projection_indices() const {
  return {1, (1 + projection_steps) / 2, projection_steps};
}

WorldState process_step(const WorldState& eta, const std::map<AgentId, AgentAction>& actions,
                        const ModelParams& params) {
  const Scene& sc = params.scene;
  WorldState next = eta;
  for (AgentId id : {AgentId::A, AgentId::B}) {
    auto it = actions.find(id);
    if (it == actions.end()) throw std::invalid_argument(std::string("process_step: missing action for agent ") + agent_name(id));
    const AgentAction& act = it->second;
    next[id].kin = step_bicycle(eta[id].kin, act.control, sc.dt, sc.geometry, sc.limits);
    next[id].control = clamp_control(act.control, sc.limits);
    next[id].signal = act.signal;
  }
  for (AgentId id : {AgentId::A, AgentId::B}) {
    next[id].has_stopped = update_h(next[id].kin, eta[id].has_stopped, sc.frame(id), params.norms);
  }
  for (AgentId id : {AgentId::A, AgentId::B}) {
    next[id].has_priority = update_priority(next, eta, eta[id].has_priority, id, params);
  }
  return next;
}

bool update_h(const VehicleState& next, bool h, const RoadFrame& frame, const NormConfig& norms) {
  if (h) return true;
  const double d = longitudinal(next, frame);
  return d >= norms.stop_region_begin && d <= norms.intersection_entry && next.v < norms.stop_speed;
}

double arrival_ratio(double d_long, double v) {
  if (v > 0.0) return d_long / v;
  if (d_long == 0.0) return 0.0;
  return d_long < 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
}

bool update_priority(const PriorityInputs& in, bool p, const NormConfig& norms) {
  if (p) return true;
  if (!norms.priority_enabled) return false;
  if (norms.stop_signs_enabled) {
    return in.h_ego_next && !in.h_ego_prev && in.d_ego_next > in.d_other_next;
  }
  const bool crossed = in.d_ego_prev < norms.priority_handover && norms.priority_handover <= in.d_ego_next;
  return crossed && arrival_ratio(in.d_ego_next, in.v_ego_next) > arrival_ratio(in.d_other_next, in.v_other_next);
}

double truncated_normal(double mean, double stddev, double lo, double hi, Rng& rng) {
  if (stddev <= 0.0) return std::clamp(mean, lo, hi);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double x = rng.normal(mean, stddev);
    if (x > lo && x < hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

SignalPairBelief signal_transition(const SignalPairBelief& gamma, bool prompting, double sigma_gamma, Rng& rng) {
  SignalPairBelief out;
  out.prompting = truncated_normal(gamma.prompting, sigma_gamma, 0.0, 1.0, rng);
  if (prompting) {
    out.yielding = rng.bernoulli(gamma.yielding) ? 1.0 : 0.0;
  } else {
    out.yielding = truncated_normal(gamma.yielding, sigma_gamma, 0.0, 1.0, rng);
  }
  return out;
}

double normative_prob(const BeliefState& s, AgentId ego, const ModelParams& params) {
  const NormConfig& n = params.norms;
  if (!n.any_enabled()) return 1.0;
  const Scene& sc = params.scene;
  const AgentId w = other_agent(ego);
  const auto& other = s[w];
  const double d_w = sc.d_long(w, other.kin);
  const double q = n.violation_prob;
  double p = 1.0;

  if (n.general_enabled) {
    const RoadCoordinates rc = to_road_frame(other.kin, sc.frame(w));
    if (std::abs(rc.d_lat) > 0.5 * sc.geometry.lane_width + sc.geometry.half_width()) p *= q;
    if (std::abs(wrap_angle(other.kin.theta - sc.frame(w).theta())) > n.lane_heading_tolerance) p *= q;
    if (other.kin.v > n.speed_limit) p *= q;
  }
  if (n.stop_signs_enabled && d_w >= n.intersection_entry && !other.has_stopped) p *= q;

  if (n.priority_enabled || n.communication_enabled) {
    const double threshold = std::max(n.intersection_entry, sc.d_long(ego, s[ego].kin) - n.trail_margin);
    const bool ahead = d_w > threshold;
    if (n.priority_enabled && ahead && s[ego].has_priority) p *= q;
    if (n.communication_enabled && ahead) {
      p *= std::max(n.coop_floor, 1.0 - n.coop_slope * std::max(other.signal.yielding - n.coop_offset, 0.0));
    }
  }
  return p;
}

double combine_projected(double pn_now, std::span<const double> rollout_values) {
  if (rollout_values.empty()) return pn_now;
  double inv_sum = 0.0;
  for (double v : rollout_values) {
    if (v <= 0.0) return 0.0;
    inv_sum += 1.0 / v;
  }
  const double harmonic = static_cast<double>(rollout_values.size()) / inv_sum;
  return std::min(pn_now, harmonic);
}

double projected_normative(const BeliefState& s_next, AgentId ego, std::span<const ControlInput> ego_tail,
                           const ModelParams& params) {
  const NormConfig& n = params.norms;
  if (!n.any_enabled()) return 1.0;
  const Scene& sc = params.scene;
  const AgentId w = other_agent(ego);
  const double pn_now = normative_prob(s_next, ego, params);

  const bool need_ego = n.priority_enabled || n.communication_enabled;
  const auto idx = n.projection_indices();
  std::array<double, 3> values{};
  std::size_t nv = 0;

  BicycleRollout ego_roll(s_next[ego].kin, sc.geometry, sc.limits, sc.dt);
  BicycleRollout other_roll(s_next[w].kin, sc.geometry, sc.limits, sc.dt);
  const ControlInput other_u = s_next[w].control;
  const ControlInput ego_hold = ego_tail.empty() ? s_next[ego].control : ego_tail.back();
  BeliefState cur = s_next;
  for (int k = 1; k <= n.projection_steps; ++k) {
    const BeliefState prev = cur;
    other_roll.step(other_u);
    cur[w].kin = other_roll.state();
    cur[w].has_stopped = update_h(cur[w].kin, prev[w].has_stopped, sc.frame(w), n);
    if (need_ego) {
      const std::size_t ti = static_cast<std::size_t>(k - 1);
      ego_roll.step(ti < ego_tail.size() ? ego_tail[ti] : ego_hold);
      cur[ego].kin = ego_roll.state();
      cur[ego].has_stopped = update_h(cur[ego].kin, prev[ego].has_stopped, sc.frame(ego), n);
      cur[ego].has_priority = update_priority(cur, prev, prev[ego].has_priority, ego, params);
    }
    for (int m : idx) {
      if (m == k && nv < values.size()) {
        values[nv++] = normative_prob(cur, ego, params);
        break;
      }
    }
  }
  return combine_projected(pn_now, std::span<const double>(values.data(), nv));
}

TransitionSample model_transition_sample(const BeliefState& s, const AgentAction& ego_action, AgentId ego,
                                         const ModelParams& params, std::span<const ControlInput> ego_tail,
                                         const TransitionOptions& options, Rng& rng) {
  const Scene& sc = params.scene;
  const NoiseConfig& nz = params.noise;
  const AgentId w = other_agent(ego);
  TransitionSample out{s, 1.0};
  BeliefState& next = out.next;

  auto& e = next[ego];
  e.kin = step_bicycle(s[ego].kin, ego_action.control, sc.dt, sc.geometry, sc.limits);
  add_noise(e.kin, nz.sigma_x_ego, rng);
  clamp_state(e.kin, sc.limits);
  e.control = clamp_control(ego_action.control, sc.limits);
  e.signal = {ego_action.signal.prompting ? 1.0 : 0.0, ego_action.signal.yielding ? 1.0 : 0.0};

  auto& o = next[w];
  o.kin = step_bicycle(s[w].kin, s[w].control, sc.dt, sc.geometry, sc.limits);
  add_noise(o.kin, nz.sigma_x_ov, rng);
  clamp_state(o.kin, sc.limits);
  o.control = clamp_control({rng.normal(s[w].control.a, nz.sigma_u_ov.a), rng.normal(s[w].control.omega, nz.sigma_u_ov.omega)},
                            sc.limits);
  o.signal = signal_transition(s[w].signal, ego_action.signal.prompting, options.sigma_gamma, rng);

  for (AgentId id : {ego, w}) {
    next[id].has_stopped = update_h(next[id].kin, s[id].has_stopped, sc.frame(id), params.norms);
  }
  for (AgentId id : {ego, w}) {
    next[id].has_priority = update_priority(next, s, s[id].has_priority, id, params);
  }
  if (options.apply_norms) out.weight = projected_normative(next, ego, ego_tail, params);
  return out;
}

double observation_loglik(const WorldState& o, const BeliefState& s, AgentId ego, const NoiseConfig& noise) {
  double ll = 0.0;
  for (AgentId id : {ego, other_agent(ego)}) {
    const auto& ok = o[id].kin;
    const auto& sk = s[id].kin;
    const auto& sx = noise.sigma_x_o;
    ll += gaussian_logpdf(ok.x, sk.x, sx.x) + gaussian_logpdf(ok.y, sk.y, sx.y) +
          gaussian_logpdf(ok.theta, sk.theta, sx.theta) + gaussian_logpdf(ok.delta, sk.delta, sx.delta) +
          gaussian_logpdf(ok.v, sk.v, sx.v);
    ll += gaussian_logpdf(o[id].control.a, s[id].control.a, noise.sigma_u_o.a) +
          gaussian_logpdf(o[id].control.omega, s[id].control.omega, noise.sigma_u_o.omega);
    const bool is_ego = id == ego;
    const double pp = is_ego ? s[id].signal.prompting : pow10(s[id].signal.prompting);
    const double py = is_ego ? s[id].signal.yielding : pow10(s[id].signal.yielding);
    ll += bernoulli_logpmf(o[id].signal.prompting, pp) + bernoulli_logpmf(o[id].signal.yielding, py);
  }
  return ll;
}

WorldState sample_observation(const BeliefState& s, AgentId ego, const NoiseConfig& noise, Rng& rng) {
  WorldState o;
  for (AgentId id : {ego, other_agent(ego)}) {
    auto& oa = o[id];
    const auto& sa = s[id];
    oa.kin = sa.kin;
    add_noise(oa.kin, noise.sigma_x_o, rng);
    oa.control = {rng.normal(sa.control.a, noise.sigma_u_o.a), rng.normal(sa.control.omega, noise.sigma_u_o.omega)};
    const bool is_ego = id == ego;
    oa.signal.prompting = rng.bernoulli(is_ego ? sa.signal.prompting : pow10(sa.signal.prompting));
    oa.signal.yielding = rng.bernoulli(is_ego ? sa.signal.yielding : pow10(sa.signal.yielding));
    oa.has_stopped = sa.has_stopped;
    oa.has_priority = sa.has_priority;
  }
  return o;
}

BeliefState to_belief_state(const WorldState& w) {
  BeliefState s;
  for (AgentId id : {AgentId::A, AgentId::B}) {
    s[id].kin = w[id].kin;
    s[id].control = w[id].control;
    s[id].signal = {w[id].signal.prompting ? 1.0 : 0.0, w[id].signal.yielding ? 1.0 : 0.0};
    s[id].has_stopped = w[id].has_stopped;
    s[id].has_priority = w[id].has_priority;
  }
  return s;
}

}  // namespace aitraffic
