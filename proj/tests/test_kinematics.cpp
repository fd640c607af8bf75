#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "aitraffic/kinematics.hpp"

using namespace aitraffic;

namespace {

// Brute-force overlap: sample points inside a and test containment in b.
bool sampled_overlap(const VehicleState& a, const VehicleState& b, const VehicleGeometry& g, int grid = 60) {
  auto inside = [&](double px, double py, const VehicleState& r) {
    const double dx = px - r.x, dy = py - r.y;
    const double c = std::cos(r.theta), s = std::sin(r.theta);
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= g.half_length() && std::abs(ly) <= g.half_width();
  };
  const double c = std::cos(a.theta), s = std::sin(a.theta);
  for (int i = 0; i <= grid; ++i) {
    for (int j = 0; j <= grid; ++j) {
      const double lx = -g.half_length() + g.length * i / grid;
      const double ly = -g.half_width() + g.width * j / grid;
      if (inside(a.x + c * lx - s * ly, a.y + s * lx + c * ly, b)) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("straight line with zero control") {
  const VehicleGeometry g;
  const VehicleState s = step_bicycle({0, 0, 0, 0, 10}, {0, 0}, 0.2, g);
  CHECK(s.x == doctest::Approx(2.0));
  CHECK(s.y == 0.0);
  CHECK(s.theta == 0.0);
  CHECK(s.v == 10.0);
}

TEST_CASE("braking uses the old speed for displacement") {
  const VehicleState s = step_bicycle({0, 0, 0, 0, 10}, {-2, 0}, 0.2, VehicleGeometry{});
  CHECK(s.x == doctest::Approx(2.0));
  CHECK(s.v == doctest::Approx(9.6));
  CHECK(s.delta == 0.0);
}

TEST_CASE("heading rate follows the steering angle") {
  const VehicleState s = step_bicycle({0, 0, 0, 0.1, 10}, {0, 0}, 0.2, VehicleGeometry{});
  const double expected = 10.0 / 2.7 * std::tan(0.1) * 0.2;
  CHECK(s.theta == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.theta == doctest::Approx(0.0743).epsilon(1e-3));
}

TEST_CASE("zero control preserves heading and speed") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-50, 50), th(-3, 3), sp(0, 20);
  for (int i = 0; i < 200; ++i) {
    const VehicleState s0{u(gen), u(gen), th(gen), 0.0, sp(gen)};
    const VehicleState s1 = step_bicycle(s0, {0, 0}, 0.2, VehicleGeometry{});
    CHECK(s1.theta == s0.theta);
    CHECK(s1.v == s0.v);
    CHECK(std::hypot(s1.x - s0.x, s1.y - s0.y) == doctest::Approx(s0.v * 0.2).epsilon(1e-12));
  }
}

TEST_CASE("clamps") {
  const KinematicLimits lim;
  const VehicleState s = step_bicycle({0, 0, 0, 0.59, 0.1}, {-6.5, 0.5}, 0.2, VehicleGeometry{}, lim);
  CHECK(s.v == 0.0);
  CHECK(s.delta == doctest::Approx(lim.delta_max));
  CHECK_THROWS_AS(step_bicycle({0, 0, 0, 0, 1}, {0, 0}, 0.0, VehicleGeometry{}), std::invalid_argument);
  CHECK_THROWS_AS(step_bicycle({NAN, 0, 0, 0, 1}, {0, 0}, 0.2, VehicleGeometry{}), std::invalid_argument);
}

TEST_CASE("road frames") {
  const RoadFrame fa(0.0), fb(std::numbers::pi / 2);
  CHECK(to_road_frame({-65, 0, 0, 0, 10}, fa).d_long == -65.0);
  CHECK(to_road_frame({0, -90, 0, 0, 10}, fb).d_long == doctest::Approx(-90.0));
  const RoadCoordinates rc = to_road_frame({3, 0, 0, 0, 0}, fb);
  CHECK(rc.d_lat == doctest::Approx(-3.0));
  const RoadCoordinates ra = to_road_frame({1.25, -7.5, 0, 0, 0}, fa);
  CHECK(ra.d_long == 1.25);
  CHECK(ra.d_lat == -7.5);
}

TEST_CASE("rectangle overlap examples") {
  const VehicleGeometry g;
  CHECK(rect_overlap({1, 2, 0.3, 0, 0}, {1, 2, 0.3, 0, 0}, g, g));
  CHECK_FALSE(rect_overlap({0, 0, 0, 0, 0}, {10, 0, 0, 0, 0}, g, g));
  CHECK(rect_overlap({0, 0, 0, 0, 0}, {0, 0, std::numbers::pi / 2, 0, 0}, g, g));
  CHECK(rect_clearance({0, 0, 0, 0, 0}, {10, 0, 0, 0, 0}, g, g) == doctest::Approx(10 - g.length));
}

TEST_CASE("rectangle overlap agrees with point sampling and is symmetric") {
  const VehicleGeometry g;
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> pos(-6, 6), th(-3.2, 3.2), shift(-100, 100);
  int disagreements = 0;
  for (int i = 0; i < 300; ++i) {
    VehicleState a{pos(gen), pos(gen), th(gen), 0, 0};
    VehicleState b{pos(gen), pos(gen), th(gen), 0, 0};
    const bool o = rect_overlap(a, b, g, g);
    CHECK(o == rect_overlap(b, a, g, g));
    if (o != (sampled_overlap(a, b, g) || sampled_overlap(b, a, g))) ++disagreements;
    // rigid motion of both
    const double phi = th(gen), tx = shift(gen), ty = shift(gen);
    auto move = [&](VehicleState s) {
      const double c = std::cos(phi), sn = std::sin(phi);
      return VehicleState{c * s.x - sn * s.y + tx, sn * s.x + c * s.y + ty, s.theta + phi, 0, 0};
    };
    const double gap = rect_clearance(a, b, g, g);
    if (gap > 1e-6 || o) CHECK(o == rect_overlap(move(a), move(b), g, g));
  }
  // sampling can miss grazing contacts
  CHECK(disagreements <= 3);
}

TEST_CASE("first order convergence to the circular arc") {
  const VehicleGeometry g;
  const double delta = 0.2, v = 5.0, t_end = 2.0;
  const double radius = g.wheelbase / std::tan(delta);
  const double theta_end = v * t_end / radius;
  const double ex = radius * std::sin(theta_end), ey = radius * (1 - std::cos(theta_end));
  auto error = [&](int n) {
    VehicleState s{0, 0, 0, delta, v};
    for (int i = 0; i < n; ++i) s = step_bicycle(s, {0, 0}, t_end / n, g);
    return std::hypot(s.x - ex, s.y - ey);
  };
  const double e1 = error(100), e2 = error(200);
  CHECK(e2 < e1);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("rollout stepper matches step_bicycle") {
  const VehicleGeometry g;
  const KinematicLimits lim;
  VehicleState s{-30, 1, 0.05, 0.02, 9};
  BicycleRollout r(s, g, lim, 0.2);
  for (int k = 0; k < 20; ++k) {
    const ControlInput u{-0.7, 0.01 * ((k % 3) - 1)};
    s = step_bicycle(s, u, 0.2, g, lim);
    r.step(u);
  }
  CHECK(r.state().x == doctest::Approx(s.x).epsilon(1e-9));
  CHECK(r.state().y == doctest::Approx(s.y).epsilon(1e-9));
  CHECK(r.state().theta == doctest::Approx(s.theta).epsilon(1e-9));
  CHECK(r.state().v == doctest::Approx(s.v).epsilon(1e-12));
}
