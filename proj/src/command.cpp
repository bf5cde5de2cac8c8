#include "multilift/command.hpp"

#include <cmath>

#include "multilift/error.hpp"

namespace multilift {

namespace {

inline constexpr double kMinSpeed = 1e-6;

struct UnitDerivs {
  Vec3 n, n_dot, n_ddot;
};

// Derivatives of w/|w| from those of w.
UnitDerivs normalize_with_derivs(const Vec3& w, const Vec3& w_dot, const Vec3& w_ddot) {
  const double s = w.norm();
  UnitDerivs d;
  d.n = w / s;
  const double s_dot = d.n.dot(w_dot);
  const Vec3 p = w_dot - d.n * s_dot;
  d.n_dot = p / s;
  const Vec3 p_dot = w_ddot - d.n_dot * s_dot - d.n * (d.n_dot.dot(w_dot) + d.n.dot(w_ddot));
  d.n_ddot = p_dot / s - p * s_dot / (s * s);
  return d;
}

Vec3 skew_part(const Mat3& m) {
  const Mat3 k = 0.5 * (m - m.transpose());
  return {k(2, 1), k(0, 2), k(1, 0)};
}

}  // namespace

std::array<double, 4> AxisSignal::eval(double t) const {
  std::array<double, 4> out{offset, 0.0, 0.0, 0.0};
  for (const SinusoidTerm& term : terms) {
    const double w = term.frequency;
    const double arg = w * t + term.phase;
    const double s = std::sin(arg);
    const double c = std::cos(arg);
    out[0] += term.amplitude * s;
    out[1] += term.amplitude * w * c;
    out[2] -= term.amplitude * w * w * s;
    out[3] -= term.amplitude * w * w * w * c;
  }
  return out;
}

TangentFrame tangent_frame(const Vec3& v, const Vec3& a, const Vec3& jerk) {
  const Vec3 h = kE3.cross(v);
  if (v.norm() < kMinSpeed || h.norm() < kMinSpeed) {
    throw Error(Errc::degenerate_tangent, "desired velocity has no horizontal component");
  }
  const UnitDerivs c1 = normalize_with_derivs(v, a, jerk);
  const UnitDerivs c2 = normalize_with_derivs(h, kE3.cross(a), kE3.cross(jerk));

  TangentFrame f;
  f.R.col(0) = c1.n;
  f.R.col(1) = c2.n;
  f.R.col(2) = kE3;
  Mat3 R_dot = Mat3::Zero();
  R_dot.col(0) = c1.n_dot;
  R_dot.col(1) = c2.n_dot;
  Mat3 R_ddot = Mat3::Zero();
  R_ddot.col(0) = c1.n_ddot;
  R_ddot.col(1) = c2.n_ddot;

  // R_dot = R hat(Omega);  R_ddot = R (hat(Omega)^2 + hat(Omega_dot)).
  f.Omega = skew_part(f.R.transpose() * R_dot);
  const Mat3 W = hat(f.Omega);
  f.Omega_dot = skew_part(f.R.transpose() * R_ddot - W * W);
  return f;
}

SinusoidCommand::SinusoidCommand(CommandSpec spec) : spec_(std::move(spec)) {}

CommandSample SinusoidCommand::at(double t) const {
  CommandSample s;
  for (int k = 0; k < 3; ++k) {
    const auto d = spec_.position[static_cast<std::size_t>(k)].eval(t);
    s.x[k] = d[0];
    s.v[k] = d[1];
    s.a[k] = d[2];
    s.jerk[k] = d[3];
  }
  switch (spec_.attitude) {
    case AttitudeMode::tangent: {
      const TangentFrame f = tangent_frame(s.v, s.a, s.jerk);
      s.R = f.R;
      s.Omega = f.Omega;
      s.Omega_dot = f.Omega_dot;
      break;
    }
    case AttitudeMode::constant:
      s.R = spec_.attitude_reference;
      break;
    case AttitudeMode::explicit_rate:
      s.R = spec_.attitude_reference * expm(t * spec_.attitude_rate);
      s.Omega = spec_.attitude_rate;
      break;
  }
  return s;
}

double derivative_consistency(const PayloadCommand& command, double t, double h) {
  const CommandSample c = command.at(t);
  const Mat3 R_dot = (command.at(t + h).R - command.at(t - h).R) / (2.0 * h);
  return (c.R.transpose() * R_dot - hat(c.Omega)).norm();
}

}  // namespace multilift
