#pragma once

// Geometric payload tracking controller for the simplified model in which each
// quadrotor applies an arbitrary force u_i. The payload loop produces a desired
// wrench, which is split into desired link tensions by a minimum-norm
// allocation; each u_i is then the sum of a component along its link (driving
// the payload) and a component normal to it (driving the link direction).

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "multilift/command.hpp"
#include "multilift/dynamics.hpp"
#include "multilift/geometry.hpp"

namespace multilift {

struct GainSet {
  double k_x0 = 8.0;
  double k_v0 = 4.0;
  double k_R0 = 20.0;
  double k_Omega0 = 4.0;
  double k_q = 40.0;
  double k_omega = 8.0;
  // Quadrotor attitude loop.
  double k_R = 1.0;
  double k_Omega = 0.5;
  double epsilon = 0.1;

  /// Throws Errc::validation_error unless all gains are positive and epsilon <= 1.
  void validate() const;
};

/// The 6 x 3n matrix [I ... I; hat(rho_1) ... hat(rho_n)] mapping per-link
/// forces (payload frame) to the resultant force and moment.
struct AllocationMatrix {
  Eigen::MatrixXd P;
  Eigen::VectorXd singular_values;
  int rank = 0;
};

AllocationMatrix build_P(std::span<const Vec3> attachments);

struct PayloadErrors {
  Vec3 e_x = Vec3::Zero();
  Vec3 e_v = Vec3::Zero();
  Vec3 e_R = Vec3::Zero();
  Vec3 e_Omega = Vec3::Zero();
  double psi_R = 0.0;
};

PayloadErrors payload_errors(const SystemState& state, const CommandSample& command);

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
};

Wrench desired_wrench(const PayloadErrors& errors, const CommandSample& command, const Mat3& J0,
                      double m0, double gravity, const GainSet& gains, const Mat3& R0);

/// Minimum-norm tensions with sum mu = F and sum hat(rho) R0^T mu = M.
/// Throws Errc::rank_deficient when rank(P) < 6.
std::vector<Vec3> allocate_min_norm(const AllocationMatrix& P, const Mat3& R0, const Wrench& wrench);

/// Acceleration of each attachment point relative to gravity, predicted from
/// the reduced payload dynamics driven by the tensions `mu`.
std::vector<Vec3> link_attachment_accel(const SystemParams& params, const SystemState& state,
                                        std::span<const Vec3> mu);

struct LinkSetpoint {
  Vec3 q = kE3;
  Vec3 q_dot = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 omega_dot = Vec3::Zero();
  bool degenerate = false;
};

inline constexpr double kMinTension = 1e-6;

/// Default time constant of the low-pass stage on omega_id_dot [s].
inline constexpr double kLinkAccelTimeConstant = 0.01;

/// Desired link directions q_id = -mu_id / |mu_id| and their rates by
/// second-order backward differences over the last three controller ticks.
/// Rates are zero until enough history exists. The differenced omega_id_dot
/// passes through a first-order low-pass with time constant `accel_tau`
/// (zero disables it). A tension below `min_tension` holds the previous
/// direction with zero rates and marks the setpoint degenerate.
class LinkSetpointFilter {
 public:
  explicit LinkSetpointFilter(std::size_t n, double min_tension = kMinTension,
                              double accel_tau = kLinkAccelTimeConstant);

  std::vector<LinkSetpoint> update(std::span<const Vec3> mu_desired, double dt);
  void reset();

 private:
  struct History {
    std::deque<Vec3> q;
    std::deque<Vec3> omega;
    std::optional<Vec3> last_q;
    Vec3 omega_dot = Vec3::Zero();
  };
  std::vector<History> history_;
  double min_tension_;
  double accel_tau_;
};

/// u_par = mu + m l |omega|^2 q + m q q^T a
Vec3 control_parallel(const AgentState& agent, const Vec3& mu, const Vec3& accel,
                      const AgentParams& params);

/// u_perp = m l hat(q) (-k_q e_q - k_omega e_omega - (q . omega_d) q_dot - hat(q)^2 omega_d_dot)
///          - m hat(q)^2 a
Vec3 control_normal(const AgentState& agent, const LinkSetpoint& setpoint, const Vec3& accel,
                    const GainSet& gains, const AgentParams& params);

/// Desired link directions and their first two time derivatives taken along
/// the predicted closed-loop flow. The payload follows the reduced dynamics
/// driven by the projected tensions q q^T mu_d, each link turns at its current
/// rate, and q_d is evaluated at t and t +/- h. Only state and command enter,
/// so the result does not depend on measured accelerations.
std::vector<LinkSetpoint> link_setpoints_along_flow(const SystemParams& params,
                                                    const GainSet& gains,
                                                    const AllocationMatrix& P,
                                                    const SystemState& state,
                                                    const PayloadCommand& command, double h,
                                                    double min_tension = kMinTension);

struct AllocationResult {
  PayloadErrors errors;
  Wrench wrench;
  std::vector<Vec3> mu_desired;
  std::vector<Vec3> mu;
  std::vector<Vec3> attach_accel;
  std::vector<LinkSetpoint> setpoints;
  std::vector<Vec3> u_parallel;
  std::vector<Vec3> u_normal;
  std::vector<Vec3> u;
  bool degenerate_tension = false;
};

enum class LinkRateMode { finite_difference, flow };

struct PayloadControllerOptions {
  double min_tension = kMinTension;
  LinkRateMode link_rates = LinkRateMode::flow;
  double flow_step = 1e-3;
  double link_accel_tau = kLinkAccelTimeConstant;
  /// Evaluate the attachment acceleration with mu_id instead of the projected mu_i.
  bool attach_accel_from_desired = false;
};

/// Stateful composition of the full simplified-model pipeline. Owns the
/// finite-difference history and the omega_d_dot low-pass state; one
/// instance per simulation.
class PayloadController {
 public:
  /// Throws Errc::rank_deficient when the attachment geometry has rank(P) < 6.
  PayloadController(SystemParams params, GainSet gains, PayloadControllerOptions options = {});

  /// Link rates always come from finite differences of past ticks.
  AllocationResult compute(const SystemState& state, const CommandSample& command, double dt);
  /// Link rates follow options().link_rates; the command is sampled at state.t.
  AllocationResult compute(const SystemState& state, const PayloadCommand& command, double dt);
  void reset();

  const PayloadControllerOptions& options() const { return options_; }

  const AllocationMatrix& allocation_matrix() const { return P_; }
  const GainSet& gains() const { return gains_; }

 private:
  SystemParams params_;
  GainSet gains_;
  PayloadControllerOptions options_;
  AllocationMatrix P_;
  LinkSetpointFilter filter_;
  std::vector<Vec3> flow_omega_dot_;

  AllocationResult assemble(const SystemState& state, const CommandSample& command);
  void finish(const SystemState& state, AllocationResult& r) const;
};

}  // namespace multilift
