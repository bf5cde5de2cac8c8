#pragma once

// Quadrotor attitude loop: turns the ideal force u_i from the payload
// controller into a thrust magnitude and a body moment for an underactuated
// quadrotor whose thrust always acts along -R_i e3.

#include <optional>

#include "multilift/geometry.hpp"
#include "multilift/payload_controller.hpp"

namespace multilift {

struct AttitudeSetpoint {
  Mat3 R_c = Mat3::Identity();
  Vec3 Omega_c = Vec3::Zero();
  Vec3 Omega_c_dot = Vec3::Zero();
  Vec3 b3 = kE3;
  Vec3 b1 = kE1;
};

inline constexpr double kMinThrust = 1e-6;

/// R_c = [-hat(b3)^2 b1 / |.|, hat(b3) b1 / |.|, b3] with b3 = -u / |u|.
/// Throws Errc::degenerate_thrust or Errc::collinear_heading.
Mat3 commanded_attitude(const Vec3& u, const Vec3& b1, double min_thrust = kMinThrust);

/// Commanded attitude plus its rates, estimated from consecutive ticks: the
/// rate from the log map of the relative rotation, its derivative by a
/// backward difference. Both are reported as zero during the first
/// `warmup` ticks while the history fills.
class AttitudeSetpointFilter {
 public:
  explicit AttitudeSetpointFilter(int warmup = 0, double min_thrust = kMinThrust)
      : warmup_(warmup), min_thrust_(min_thrust) {}

  AttitudeSetpoint update(const Vec3& u, const Vec3& b1, double dt);
  void reset();

 private:
  int warmup_;
  int ticks_ = 0;
  double min_thrust_;
  std::optional<Mat3> last_R_;
  std::optional<Vec3> last_Omega_;
};

struct RotorCommand {
  double thrust = 0.0;
  Vec3 moment = Vec3::Zero();
};

/// f = -u . R e3
/// M = -(k_R/eps^2) e_R - (k_Omega/eps) e_Omega + Omega x J Omega
///     - J (hat(Omega) R^T R_c Omega_c - R^T R_c Omega_c_dot)
RotorCommand rotor_command(const AgentState& agent, const AttitudeSetpoint& setpoint,
                           const GainSet& gains, const Mat3& J, const Vec3& u);

/// -f R e3
Vec3 realized_force(double thrust, const Mat3& R);

}  // namespace multilift
