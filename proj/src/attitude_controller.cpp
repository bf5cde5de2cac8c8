#include "multilift/attitude_controller.hpp"

#include "multilift/error.hpp"

namespace multilift {

inline constexpr double kMinHeadingSeparation = 1e-6;

Mat3 commanded_attitude(const Vec3& u, const Vec3& b1, double min_thrust) {
  const double mag = u.norm();
  if (!(mag >= min_thrust)) {
    throw Error(Errc::degenerate_thrust, "ideal force magnitude " + std::to_string(mag));
  }
  const Vec3 b3 = -u / mag;
  const Mat3 b3hat = hat(b3);
  const Vec3 side = b3hat * b1;
  if (side.norm() < kMinHeadingSeparation) {
    throw Error(Errc::collinear_heading, "heading reference is parallel to the thrust axis");
  }
  const Vec3 first = -b3hat * side;
  Mat3 R;
  R.col(0) = first.normalized();
  R.col(1) = side.normalized();
  R.col(2) = b3;
  return R;
}

void AttitudeSetpointFilter::reset() {
  last_R_.reset();
  last_Omega_.reset();
  ticks_ = 0;
}

AttitudeSetpoint AttitudeSetpointFilter::update(const Vec3& u, const Vec3& b1, double dt) {
  AttitudeSetpoint sp;
  sp.R_c = commanded_attitude(u, b1, min_thrust_);
  sp.b3 = sp.R_c.col(2);
  sp.b1 = b1;
  if (last_R_) {
    sp.Omega_c = logm(last_R_->transpose() * sp.R_c) / dt;
    if (last_Omega_) sp.Omega_c_dot = (sp.Omega_c - *last_Omega_) / dt;
    last_Omega_ = sp.Omega_c;
  }
  last_R_ = sp.R_c;
  if (ticks_ < warmup_) {
    ++ticks_;
    sp.Omega_c.setZero();
    sp.Omega_c_dot.setZero();
  }
  return sp;
}

RotorCommand rotor_command(const AgentState& agent, const AttitudeSetpoint& setpoint,
                           const GainSet& gains, const Mat3& J, const Vec3& u) {
  const Mat3& R = agent.R;
  const Vec3& W = agent.Omega;
  const AttitudeError err = attitude_error(R, setpoint.R_c, W, setpoint.Omega_c);
  const Mat3 rel = R.transpose() * setpoint.R_c;
  const double eps = gains.epsilon;

  RotorCommand cmd;
  cmd.thrust = -u.dot(R * kE3);
  cmd.moment = -(gains.k_R / (eps * eps)) * err.e_R - (gains.k_Omega / eps) * err.e_Omega +
               W.cross(J * W) - J * (hat(W) * rel * setpoint.Omega_c - rel * setpoint.Omega_c_dot);
  return cmd;
}

Vec3 realized_force(double thrust, const Mat3& R) { return -thrust * (R * kE3); }

}  // namespace multilift
