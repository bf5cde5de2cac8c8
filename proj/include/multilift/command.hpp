#pragma once

#include <array>
#include <memory>
#include <vector>

#include "multilift/geometry.hpp"

namespace multilift {

/// Desired payload trajectory and its derivatives at one instant.
struct CommandSample {
  Vec3 x = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  Vec3 jerk = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 Omega = Vec3::Zero();
  Vec3 Omega_dot = Vec3::Zero();
};

class PayloadCommand {
 public:
  virtual ~PayloadCommand() = default;
  virtual CommandSample at(double t) const = 0;
};

/// offset + sum_k amplitude_k sin(frequency_k t + phase_k), per axis.
struct SinusoidTerm {
  double amplitude = 0.0;
  double frequency = 0.0;  // rad/s
  double phase = 0.0;      // rad
};

struct AxisSignal {
  double offset = 0.0;
  std::vector<SinusoidTerm> terms;

  /// Value and first three derivatives.
  std::array<double, 4> eval(double t) const;
};

enum class AttitudeMode { tangent, constant, explicit_rate };

struct CommandSpec {
  std::array<AxisSignal, 3> position;
  AttitudeMode attitude = AttitudeMode::tangent;
  /// Constant attitude, or the attitude at t = 0 for explicit_rate.
  Mat3 attitude_reference = Mat3::Identity();
  /// Body-frame rate of the explicit_rate mode.
  Vec3 attitude_rate = Vec3::Zero();
};

struct TangentFrame {
  Mat3 R;
  Vec3 Omega;
  Vec3 Omega_dot;
};

/// R = [v/|v|, hat(e3) v/|hat(e3) v|, e3] with its body rate and rate derivative
/// from exact differentiation of the columns. Throws Errc::degenerate_tangent
/// when the velocity or its horizontal projection vanishes.
TangentFrame tangent_frame(const Vec3& v, const Vec3& a, const Vec3& jerk);

class SinusoidCommand final : public PayloadCommand {
 public:
  explicit SinusoidCommand(CommandSpec spec);
  CommandSample at(double t) const override;
  const CommandSpec& spec() const { return spec_; }

 private:
  CommandSpec spec_;
};

/// Max deviation of R_d(t)^T (R_d(t+h) - R_d(t-h)) / 2h from hat(Omega_d(t)).
double derivative_consistency(const PayloadCommand& command, double t, double h = 1e-5);

}  // namespace multilift
