#pragma once

// Coupled equations of motion of a rigid payload carried by n quadrotors
// through rigid massless links.
//
// Frames: e3 points down along gravity. Payload and quadrotor angular
// velocities are body-frame; link angular velocities are inertial and
// perpendicular to the link direction q_i (unit vector from the quadrotor
// toward the payload).

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "multilift/geometry.hpp"

namespace multilift {

struct AgentParams {
  double mass = 0.0;
  Mat3 inertia = Mat3::Identity();
  double link_length = 1.0;
  /// Link attachment point on the payload, payload body frame.
  Vec3 attachment = Vec3::Zero();
};

struct SystemParams {
  double payload_mass = 0.0;
  Mat3 payload_inertia = Mat3::Identity();
  std::vector<AgentParams> agents;
  double gravity = 9.81;

  std::size_t n() const { return agents.size(); }
  /// m_0 + sum m_i
  double total_mass() const;
  /// J_0 - sum m_i hat(rho_i)^2
  Mat3 augmented_inertia() const;
  std::vector<Vec3> attachments() const;
  /// Throws Errc::validation_error naming the first violated invariant.
  void validate() const;
};

struct AgentState {
  Vec3 q = kE3;
  Vec3 omega = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 Omega = Vec3::Zero();
};

struct SystemState {
  double t = 0.0;
  Vec3 x0 = Vec3::Zero();
  Vec3 v0 = Vec3::Zero();
  Mat3 R0 = Mat3::Identity();
  Vec3 Omega0 = Vec3::Zero();
  std::vector<AgentState> agents;

  bool all_finite() const;
};

struct ConstraintResidual {
  double link_norm = 0.0;        // max | ||q_i|| - 1 |
  double link_rate = 0.0;        // max | omega_i . q_i |
  double orthogonality = 0.0;    // max ||R^T R - I||_F over all rotations
};

ConstraintResidual constraint_residual(const SystemState& state);

/// Per-agent actuation. Ideal force inputs act directly as u_i (simplified
/// model); thrust inputs act as u_i = -f_i R_i e3 evaluated on the current
/// attitude (full model). Moments are body-frame quadrotor torques.
struct ControlInput {
  enum class Kind { ideal_force, thrust };

  Kind kind = Kind::ideal_force;
  std::vector<Vec3> force;
  std::vector<double> thrust;
  std::vector<Vec3> moment;

  static ControlInput zero(std::size_t n);
  static ControlInput ideal(std::vector<Vec3> u);
  static ControlInput full(std::vector<double> f, std::vector<Vec3> M);

  /// Inertial force of agent i for the attitude in `state`.
  std::vector<Vec3> forces(const SystemState& state) const;
  void check(std::size_t n) const;
};

struct Accelerations {
  Vec3 x0_ddot = Vec3::Zero();
  Vec3 Omega0_dot = Vec3::Zero();
  std::vector<Vec3> omega_dot;
  std::vector<Vec3> Omega_dot;
};

/// M * [x0_ddot; Omega0_dot; omega_1_dot; ...; omega_n_dot] = rhs
struct MatrixForm {
  Eigen::MatrixXd mass;
  Eigen::VectorXd rhs;
};

MatrixForm assemble_matrix_form(const SystemParams& params, const SystemState& state,
                                std::span<const Vec3> u);

inline constexpr double kMaxCondition = 1e12;

/// Dense solve of the matrix form. Quadrotor attitude accelerations are left
/// empty unless the overload with moments is used.
Accelerations solve_accelerations(const MatrixForm& form);
Accelerations solve_accelerations(const MatrixForm& form, const SystemParams& params,
                                  const SystemState& state, std::span<const Vec3> moments);

/// Accelerations from the eliminated equations: a coupled 6x6 solve for the
/// payload followed by the link equations, with u split into its components
/// parallel and normal to each link.
Accelerations accel_eliminated(const SystemParams& params, const SystemState& state,
                               std::span<const Vec3> u);

/// M_q = m_0 I + sum m_i q_i q_i^T
Mat3 link_mass_matrix(const SystemParams& params, const SystemState& state);

/// J Omega_dot + Omega x J Omega = M
Vec3 quadrotor_attitude_accel(const Mat3& J, const Vec3& Omega, const Vec3& M);

/// Full acceleration set for an input (matrix-form route).
Accelerations accelerations(const SystemParams& params, const SystemState& state,
                            const ControlInput& input);

enum class Execution { serial, parallel };

struct AccelerationSample {
  SystemState state;
  std::vector<Vec3> u;
};

enum class EquationForm { matrix, eliminated };

/// Evaluates many independent samples. The parallel path distributes samples
/// over OpenMP threads; results are identical to the serial path.
std::vector<Accelerations> accelerations_batch(const SystemParams& params,
                                               std::span<const AccelerationSample> samples,
                                               EquationForm form, Execution exec);

/// Called once per step on the pre-step state; the result is held over all
/// RK stages.
using ControlProvider = std::function<ControlInput(const SystemState&)>;

inline constexpr double kMaxStep = 0.05;

/// Classical RK4 in ambient coordinates followed by reprojection of every
/// rotation and link onto its manifold.
SystemState step(const SystemParams& params, const SystemState& state, const ControlInput& input,
                 double dt);
SystemState step(const SystemParams& params, const SystemState& state,
                 const ControlProvider& provider, double dt);

struct Energy {
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
};

Energy total_energy(const SystemParams& params, const SystemState& state);

/// m_0 v_0 + sum m_i xdot_i
Vec3 linear_momentum(const SystemParams& params, const SystemState& state);

/// x_i = x_0 + R_0 rho_i - l_i q_i
std::vector<Vec3> quadrotor_positions(const SystemParams& params, const SystemState& state);
std::vector<Vec3> quadrotor_velocities(const SystemParams& params, const SystemState& state);

}  // namespace multilift
