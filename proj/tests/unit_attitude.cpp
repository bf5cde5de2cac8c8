#include <cmath>
#include <numbers>

#include "doctest.h"
#include "multilift/attitude_controller.hpp"
#include "multilift/error.hpp"
#include "support.hpp"

using namespace multilift;
using multilift::testing::max_abs;

namespace {

const Mat3 kJ = Vec3(0.0820, 0.0845, 0.1377).asDiagonal();

struct Rigid {
  Mat3 R;
  Vec3 W;
};

// Time for Psi_R to fall below 1e-4 when tracking a fixed R_c from rest.
double settle_time(double epsilon, const Mat3& Rc) {
  GainSet g;
  g.epsilon = epsilon;
  AttitudeSetpoint sp;
  sp.R_c = Rc;
  const double dt = 1e-4;
  auto rate = [&](const Rigid& x) {
    AgentState a;
    a.R = x.R;
    a.Omega = x.W;
    const RotorCommand c = rotor_command(a, sp, g, kJ, -Rc * kE3);
    return Rigid{x.R * hat(x.W), quadrotor_attitude_accel(kJ, x.W, c.moment)};
  };
  auto add = [](const Rigid& x, const Rigid& d, double h) {
    return Rigid{x.R + h * d.R, x.W + h * d.W};
  };
  Rigid x{Mat3::Identity(), Vec3::Zero()};
  for (int k = 0; k < 200000; ++k) {
    if (attitude_error(x.R, Rc, x.W, Vec3::Zero()).psi < 1e-4) return k * dt;
    const Rigid k1 = rate(x);
    const Rigid k2 = rate(add(x, k1, dt / 2));
    const Rigid k3 = rate(add(x, k2, dt / 2));
    const Rigid k4 = rate(add(x, k3, dt));
    x.R += dt / 6 * (k1.R + 2 * k2.R + 2 * k3.R + k4.R);
    x.W += dt / 6 * (k1.W + 2 * k2.W + 2 * k3.W + k4.W);
    x.R = project_rotation(x.R);
  }
  return INFINITY;
}

}  // namespace

TEST_CASE("commanded attitude") {
  CHECK(max_abs(commanded_attitude({0, 0, -10}, kE1) - Mat3::Identity()) < 1e-15);
  try {
    commanded_attitude({0, 0, -10}, kE3);
    FAIL("expected CollinearHeading");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::collinear_heading);
  }
  CHECK_THROWS_AS(commanded_attitude(Vec3::Zero(), kE1), Error);

  const Vec3 u(1, -2, -9);
  const Mat3 R = commanded_attitude(u, kE1);
  CHECK(is_rotation(R, 1e-12));
  CHECK((R * kE3 + u.normalized()).norm() < 1e-15);
}

TEST_CASE("setpoint filter") {
  AttitudeSetpointFilter f;
  for (int k = 0; k < 4; ++k) {
    const AttitudeSetpoint sp = f.update({0, 0, -10}, kE1, 1e-3);
    CHECK(sp.Omega_c.norm() == 0.0);
    CHECK(sp.Omega_c_dot.norm() == 0.0);
  }

  AttitudeSetpointFilter turning;
  const double rate = 0.5;
  const double dt = 1e-3;
  AttitudeSetpoint last;
  for (int k = 0; k < 10; ++k) {
    const double t = k * dt;
    last = turning.update({0, 0, -10}, {std::cos(rate * t), std::sin(rate * t), 0}, dt);
  }
  CHECK((last.Omega_c - Vec3(0, 0, rate)).norm() < 1e-9);
}

TEST_CASE("rotor command") {
  const GainSet g;
  const Vec3 u(1, -2, -9);
  AttitudeSetpoint sp;
  sp.R_c = commanded_attitude(u, kE1);
  AgentState a;
  a.R = sp.R_c;
  const RotorCommand at_rest = rotor_command(a, sp, g, kJ, u);
  CHECK(at_rest.thrust == doctest::Approx(u.norm()).epsilon(1e-14));
  CHECK(at_rest.moment.norm() < 1e-12);

  AttitudeSetpoint level;
  AgentState tilted;
  tilted.R = expm({std::asin(0.1), 0, 0});
  GainSet unit;
  unit.k_R = 1.0;
  unit.epsilon = 0.1;
  const RotorCommand fb = rotor_command(tilted, level, unit, kJ, {0, 0, -10});
  CHECK((fb.moment - Vec3(-10, 0, 0)).norm() < 1e-12);
}

TEST_CASE("realized force") {
  CHECK((realized_force(10, Mat3::Identity()) - Vec3(0, 0, -10)).norm() == 0.0);
  CHECK(realized_force(0, expm({0.3, 0.1, 0})).norm() == 0.0);

  const Vec3 u(0, 0, -10);
  AgentState sideways;
  sideways.R = expm({std::numbers::pi / 2, 0, 0});
  AttitudeSetpoint sp;
  const RotorCommand c = rotor_command(sideways, sp, GainSet{}, kJ, u);
  CHECK(std::abs(c.thrust) < 1e-14);
  CHECK(realized_force(c.thrust, sideways.R).norm() < 1e-14);
}

TEST_CASE("boundary layer converges faster for smaller epsilon") {
  const Mat3 Rc = expm({0.6, -0.4, 0.8});
  const double t20 = settle_time(0.2, Rc);
  const double t10 = settle_time(0.1, Rc);
  const double t05 = settle_time(0.05, Rc);
  REQUIRE(std::isfinite(t20));
  CHECK(t10 <= 0.5 * t20 * 1.01);
  CHECK(t05 <= 0.5 * t10 * 1.01);
}
