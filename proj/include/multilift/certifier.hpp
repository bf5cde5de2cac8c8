#pragma once

// Numerical instantiation of the Lyapunov stability conditions for the
// payload/link loops and for the quadrotor attitude (boundary-layer) loop.
// Every matrix is built exactly as the bound is stated; a certificate passes
// when all required matrices are positive-definite.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "multilift/command.hpp"
#include "multilift/dynamics.hpp"
#include "multilift/payload_controller.hpp"

namespace multilift {

using Mat2 = Eigen::Matrix2d;

/// Error region: |e_x| < e_x_max, Psi_R0 < psi_R0, Psi_qi < psi_q.
struct ErrorDomain {
  double e_x_max = 0.5;
  double psi_R0 = 0.1;
  double psi_q = 0.05;

  double alpha0() const;
  double alpha_q() const;
  /// Bound parameters must lie in (0, 1) and e_x_max > 0.
  void validate() const;
};

struct CertificateConstants {
  double lambda_min_PPt = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  std::vector<double> delta;
  std::vector<double> sigma;
  double B = 0.0;
  double lambda_min_J0 = 0.0;
  double lambda_max_J0 = 0.0;
};

/// Geometry-dependent constants; B is supplied separately.
CertificateConstants certificate_constants(const SystemParams& params, double B);

/// Sampled bound on the trajectory-driven terms of the error dynamics over
/// [0, horizon], times `safety`.
double estimate_B(const SystemParams& params, const PayloadCommand& command, double horizon,
                  int samples, double safety = 1.1);

struct CrossConstants {
  double c_x = 0.0;
  double c_R = 0.0;
  double c_q = 0.0;
};

struct AgentBlocks {
  Mat2 W_x, W_R, W_q, W_xR, W_xq, W_Rq;
  Eigen::Matrix3d W;
  double lambda_min_W = 0.0;
};

struct OuterLoopReport {
  CrossConstants c;
  Mat2 P_lower_x, P_upper_x, P_lower_R, P_upper_R, P_lower_q, P_upper_q;
  std::vector<AgentBlocks> agents;
  /// Smallest eigenvalue over the six Lyapunov bound matrices.
  double lambda_min_bounds = 0.0;
  /// min_i lambda_min(W_i)
  double lambda_min_W = 0.0;
  /// n alpha_i beta < 1 for the domain.
  bool domain_admissible = false;
  bool pass = false;
};

OuterLoopReport outer_loop_matrices(const SystemParams& params, const GainSet& gains,
                                    const ErrorDomain& domain,
                                    const CertificateConstants& constants, const CrossConstants& c);

struct CrossConstantSearch {
  double lower = 1e-4;
  double upper = 10.0;
  int points_per_axis = 31;
};

/// Logarithmic grid search for (c_x, c_R, c_q) maximizing min_i lambda_min(W_i)
/// subject to the Lyapunov bound matrices being positive-definite. Returns
/// nullopt (Infeasible) when no grid point makes every W_i positive-definite.
/// The parallel path splits the grid over OpenMP threads and reduces to the
/// same point the serial path selects.
std::optional<CrossConstants> search_cross_constants(const SystemParams& params,
                                                     const GainSet& gains,
                                                     const ErrorDomain& domain,
                                                     const CertificateConstants& constants,
                                                     const CrossConstantSearch& grid = {},
                                                     Execution exec = Execution::parallel);

struct InnerLoopReport {
  double c3_max = 0.0;
  double c3 = 0.0;
  Mat2 L1, L2, U;
  double lambda_min_L1 = 0.0;
  double lambda_min_L2 = 0.0;
  double lambda_min_U = 0.0;
  bool pass = false;
};

InnerLoopReport inner_loop_certificate(const Mat3& J, double k_R, double k_Omega, double psi_R);

struct CertificateReport {
  ErrorDomain domain;
  CertificateConstants constants;
  std::optional<OuterLoopReport> outer;
  std::vector<InnerLoopReport> inner;
  bool feasible = false;
  bool pass = false;
};

CertificateReport certify(const SystemParams& params, const GainSet& gains,
                          const ErrorDomain& domain, double B, double psi_R = 1.0,
                          const CrossConstantSearch& grid = {},
                          Execution exec = Execution::parallel);

nlohmann::json to_json(const CertificateReport& report);

/// Outer-loop Lyapunov function evaluated on tracking errors.
struct LinkErrorTerms {
  Vec3 e_q;
  Vec3 e_omega;
  double psi;
};

double lyapunov_value(const GainSet& gains, const CrossConstants& c, const Mat3& J0,
                      const PayloadErrors& payload, std::span<const LinkErrorTerms> links);

double min_eigenvalue(const Mat2& m);

}  // namespace multilift
