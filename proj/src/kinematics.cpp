#include "aitraffic/kinematics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace aitraffic {

namespace {

double snap(double x) { return std::abs(x) < 1e-12 ? 0.0 : (std::abs(std::abs(x) - 1.0) < 1e-12 ? std::copysign(1.0, x) : x); }

bool finite(const VehicleState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.theta) && std::isfinite(s.delta) &&
         std::isfinite(s.v);
}

struct Vec2 {
  double x, y;
};

std::array<Vec2, 4> corners(const VehicleState& s, const VehicleGeometry& g) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const double hl = g.half_length(), hw = g.half_width();
  std::array<Vec2, 4> out{};
  const double lx[4] = {hl, hl, -hl, -hl};
  const double ly[4] = {hw, -hw, -hw, hw};
  for (int i = 0; i < 4; ++i) {
    out[i] = {s.x + c * lx[i] - sn * ly[i], s.y + sn * lx[i] + c * ly[i]};
  }
  return out;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

RoadFrame::RoadFrame(double theta_road)
    : theta_(theta_road), cos_(snap(std::cos(theta_road))), sin_(snap(std::sin(theta_road))) {}

ControlInput clamp_control(const ControlInput& u, const KinematicLimits& limits) {
  return {std::clamp(u.a, -limits.a_max, limits.a_max), std::clamp(u.omega, -limits.omega_max, limits.omega_max)};
}

void clamp_state(VehicleState& s, const KinematicLimits& limits) {
  s.delta = std::clamp(s.delta, -limits.delta_max, limits.delta_max);
  s.v = std::max(s.v, 0.0);
}

VehicleState step_bicycle(const VehicleState& state, const ControlInput& input, double dt,
                          const VehicleGeometry& geom, const KinematicLimits& limits) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step_bicycle: dt must be positive and finite");
  if (!finite(state) || !std::isfinite(input.a) || !std::isfinite(input.omega)) {
    throw std::invalid_argument("step_bicycle: non-finite state or input");
  }
  const ControlInput u = clamp_control(input, limits);
  VehicleState next;
  next.x = state.x + state.v * std::cos(state.theta) * dt;
  next.y = state.y + state.v * std::sin(state.theta) * dt;
  next.theta = state.theta + state.v / geom.wheelbase * std::tan(state.delta) * dt;
  next.delta = state.delta + u.omega * dt;
  next.v = state.v + u.a * dt;
  clamp_state(next, limits);
  return next;
}

RoadCoordinates to_road_frame(const VehicleState& state, const RoadFrame& frame) {
  return {state.x * frame.cos_theta() + state.y * frame.sin_theta(),
          state.y * frame.cos_theta() - state.x * frame.sin_theta()};
}

bool rect_overlap(const VehicleState& a, const VehicleState& b, const VehicleGeometry& geom_a,
                  const VehicleGeometry& geom_b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double reach = std::hypot(geom_a.half_length(), geom_a.half_width()) +
                       std::hypot(geom_b.half_length(), geom_b.half_width());
  if (dx * dx + dy * dy > reach * reach) return false;

  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  const Vec2 axes[4] = {{ca, sa}, {-sa, ca}, {cb, sb}, {-sb, cb}};
  for (const auto& ax : axes) {
    const double dist = std::abs(dx * ax.x + dy * ax.y);
    const double ra = geom_a.half_length() * std::abs(ca * ax.x + sa * ax.y) +
                      geom_a.half_width() * std::abs(-sa * ax.x + ca * ax.y);
    const double rb = geom_b.half_length() * std::abs(cb * ax.x + sb * ax.y) +
                      geom_b.half_width() * std::abs(-sb * ax.x + cb * ax.y);
    if (dist > ra + rb) return false;
  }
  return true;
}

double rect_clearance(const VehicleState& a, const VehicleState& b, const VehicleGeometry& geom_a,
                      const VehicleGeometry& geom_b) {
  if (rect_overlap(a, b, geom_a, geom_b)) return 0.0;
  const auto pa = corners(a, geom_a);
  const auto pb = corners(b, geom_b);
  double best = std::numeric_limits<double>::infinity();
  // Convex polygons that do not intersect: the minimum distance is attained
  // between a vertex of one and an edge of the other.
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, point_segment_distance(pa[i], pb[j], pb[(j + 1) % 4]));
      best = std::min(best, point_segment_distance(pb[i], pa[j], pa[(j + 1) % 4]));
    }
  }
  return best;
}

BicycleRollout::BicycleRollout(const VehicleState& start, const VehicleGeometry& geom,
                               const KinematicLimits& limits, double dt)
    : s_(start),
      c_(std::cos(start.theta)),
      sn_(std::sin(start.theta)),
      tan_delta_(std::tan(start.delta)),
      inv_wheelbase_(1.0 / geom.wheelbase),
      dt_(dt),
      limits_(limits) {}

void BicycleRollout::step(const ControlInput& input) {
  const ControlInput u = clamp_control(input, limits_);
  const double dtheta = s_.v * inv_wheelbase_ * tan_delta_ * dt_;
  s_.x += s_.v * c_ * dt_;
  s_.y += s_.v * sn_ * dt_;
  s_.theta += dtheta;
  if (dtheta != 0.0) {
    double cd, sd;
    if (std::abs(dtheta) < 1e-3) {
      const double d2 = dtheta * dtheta;
      cd = 1.0 - d2 * (0.5 - d2 / 24.0);
      sd = dtheta * (1.0 - d2 * (1.0 / 6.0 - d2 / 120.0));
    } else {
      cd = std::cos(dtheta);
      sd = std::sin(dtheta);
    }
    const double c = c_ * cd - sn_ * sd;
    sn_ = sn_ * cd + c_ * sd;
    c_ = c;
  }
  const double old_delta = s_.delta;
  s_.delta = std::clamp(s_.delta + u.omega * dt_, -limits_.delta_max, limits_.delta_max);
  if (s_.delta != old_delta) {
    if (std::abs(s_.delta) < 1e-2) {
      const double d2 = s_.delta * s_.delta;
      tan_delta_ = s_.delta * (1.0 + d2 * (1.0 / 3.0 + d2 * (2.0 / 15.0 + d2 * 17.0 / 315.0)));
    } else {
      tan_delta_ = std::tan(s_.delta);
    }
  }
  s_.v = std::max(s_.v + u.a * dt_, 0.0);
}

}  // namespace aitraffic
