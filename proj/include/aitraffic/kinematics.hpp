#pragma once

#include <utility>

namespace aitraffic {

/// Continuous kinematic state of one vehicle (world frame).
struct VehicleState {
  double x = 0.0;      // [m]
  double y = 0.0;      // [m]
  double theta = 0.0;  // heading [rad]
  double delta = 0.0;  // steering angle [rad]
  double v = 0.0;      // longitudinal speed [m/s]

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlInput {
  double a = 0.0;      // longitudinal acceleration [m/s^2]
  double omega = 0.0;  // steering rate [rad/s]

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct VehicleGeometry {
  double length = 4.85;
  double width = 1.9;
  double wheelbase = 2.7;
  double lane_width = 3.0;

  double half_length() const { return 0.5 * length; }
  double half_width() const { return 0.5 * width; }
};

struct KinematicLimits {
  double delta_max = 0.6;
  double a_max = 6.0;
  double omega_max = 0.5;
};

/// Lane axis of one agent. The trig values are snapped so that axis-aligned
/// lanes transform without rounding residue.
class RoadFrame {
 public:
  RoadFrame() = default;
  explicit RoadFrame(double theta_road);

  double theta() const { return theta_; }
  double cos_theta() const { return cos_; }
  double sin_theta() const { return sin_; }

 private:
  double theta_ = 0.0;
  double cos_ = 1.0;
  double sin_ = 0.0;
};

struct RoadCoordinates {
  double d_long = 0.0;
  double d_lat = 0.0;
};

ControlInput clamp_control(const ControlInput& u, const KinematicLimits& limits);

/// Enforces |delta| <= delta_max and v >= 0.
void clamp_state(VehicleState& s, const KinematicLimits& limits);

/// One forward-Euler step of the kinematic bicycle model. Old-state values are
/// used on every right-hand side. Throws std::invalid_argument on non-finite
/// input or dt <= 0.
VehicleState step_bicycle(const VehicleState& state, const ControlInput& input, double dt,
                          const VehicleGeometry& geom, const KinematicLimits& limits = {});

RoadCoordinates to_road_frame(const VehicleState& state, const RoadFrame& frame);

inline double longitudinal(const VehicleState& s, const RoadFrame& f) {
  return s.x * f.cos_theta() + s.y * f.sin_theta();
}

/// Separating-axis test on the two heading-oriented rectangles.
bool rect_overlap(const VehicleState& a, const VehicleState& b, const VehicleGeometry& geom_a,
                  const VehicleGeometry& geom_b);

/// Minimum Euclidean clearance between the two rectangles; 0 when they overlap.
double rect_clearance(const VehicleState& a, const VehicleState& b, const VehicleGeometry& geom_a,
                      const VehicleGeometry& geom_b);

/// Fast deterministic stepper for constant-control rollouts. Carries cos/sin of
/// the heading and tan of the steering angle incrementally; agrees with
/// step_bicycle to rounding for small per-step heading changes.
class BicycleRollout {
 public:
  BicycleRollout(const VehicleState& start, const VehicleGeometry& geom, const KinematicLimits& limits,
                 double dt);

  void step(const ControlInput& u);
  const VehicleState& state() const { return s_; }

 private:
  VehicleState s_;
  double c_, sn_, tan_delta_;
  double inv_wheelbase_, dt_;
  KinematicLimits limits_;
};

}  // namespace aitraffic
