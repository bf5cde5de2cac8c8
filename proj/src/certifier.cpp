#include "multilift/certifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "multilift/error.hpp"

namespace multilift {

namespace {

Mat2 sym2(double a, double b, double d) {
  Mat2 m;
  m << a, b, b, d;
  return m;
}

double spectral_norm(const Mat2& m) {
  return Eigen::JacobiSVD<Mat2>(m).singularValues()(0);
}

double min_eigenvalue3(const Eigen::Matrix3d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m).eigenvalues()(0);
}

struct GridBest {
  CrossConstants c;
  double value = -std::numeric_limits<double>::infinity();
  long index = -1;
};

// Objective of the grid search: min_i lambda_min(W_i) when every Lyapunov
// bound matrix is positive-definite, -inf otherwise.
double search_objective(const OuterLoopReport& r) {
  if (!(r.lambda_min_bounds > 0.0)) return -std::numeric_limits<double>::infinity();
  return r.lambda_min_W;
}

void consider(GridBest& best, double value, long index, const CrossConstants& c) {
  const bool better = best.index < 0 || value > best.value ||
                      (value == best.value && index < best.index);
  if (better) {
    best.value = value;
    best.index = index;
    best.c = c;
  }
}

GridBest grid_search(const SystemParams& params, const GainSet& gains, const ErrorDomain& domain,
                     const CertificateConstants& constants, const CrossConstantSearch& grid,
                     Execution exec) {
  const int m = grid.points_per_axis;
  if (m < 2 || !(grid.lower > 0.0) || !(grid.upper > grid.lower)) {
    throw Error(Errc::precondition, "cross-constant grid must have >= 2 points on a positive range");
  }
  std::vector<double> axis(static_cast<std::size_t>(m));
  const double lo = std::log10(grid.lower);
  const double hi = std::log10(grid.upper);
  for (int k = 0; k < m; ++k) axis[static_cast<std::size_t>(k)] = std::pow(10.0, lo + (hi - lo) * k / (m - 1));

  const long total = static_cast<long>(m) * m * m;
  const auto at = [&](long idx) {
    const auto ix = static_cast<std::size_t>(idx / (m * m));
    const auto iy = static_cast<std::size_t>((idx / m) % m);
    const auto iz = static_cast<std::size_t>(idx % m);
    return CrossConstants{axis[ix], axis[iy], axis[iz]};
  };

  GridBest best;
  if (exec == Execution::serial) {
    for (long idx = 0; idx < total; ++idx) {
      const CrossConstants c = at(idx);
      consider(best, search_objective(outer_loop_matrices(params, gains, domain, constants, c)),
               idx, c);
    }
    return best;
  }

#pragma omp parallel
  {
    GridBest local;
#pragma omp for schedule(static) nowait
    for (long idx = 0; idx < total; ++idx) {
      const CrossConstants c = at(idx);
      consider(local, search_objective(outer_loop_matrices(params, gains, domain, constants, c)),
               idx, c);
    }
#pragma omp critical(multilift_grid_best)
    if (local.index >= 0) consider(best, local.value, local.index, local.c);
  }
  return best;
}

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json mat2_json(const Mat2& m) {
  return {{"matrix", mat_json(m)}, {"lambda_min", min_eigenvalue(m)}};
}

}  // namespace

double min_eigenvalue(const Mat2& m) {
  return Eigen::SelfAdjointEigenSolver<Mat2>(m).eigenvalues()(0);
}

double ErrorDomain::alpha0() const { return std::sqrt(psi_R0 * (2.0 - psi_R0)); }
double ErrorDomain::alpha_q() const { return std::sqrt(psi_q * (2.0 - psi_q)); }

void ErrorDomain::validate() const {
  if (!(e_x_max > 0.0)) throw Error(Errc::validation_error, "e_x_max > 0");
  if (!(psi_R0 > 0.0 && psi_R0 < 1.0)) throw Error(Errc::validation_error, "psi_R0 in (0, 1)");
  if (!(psi_q > 0.0 && psi_q < 1.0)) throw Error(Errc::validation_error, "psi_q in (0, 1)");
}

CertificateConstants certificate_constants(const SystemParams& params, double B) {
  const AllocationMatrix P = build_P(params.attachments());
  const Eigen::MatrixXd PPt = P.P * P.P.transpose();
  CertificateConstants k;
  k.lambda_min_PPt = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(PPt).eigenvalues()(0);
  const double root = std::sqrt(std::max(k.lambda_min_PPt, 0.0));
  const double m0 = params.payload_mass;
  k.gamma = 1.0 / (m0 * root);
  k.beta = m0 * k.gamma;
  for (const AgentParams& a : params.agents) {
    // |hat(rho)| in the 2-norm is |rho|.
    const double d = m0 * a.attachment.norm() / root;
    k.delta.push_back(d);
    k.sigma.push_back(d / m0);
  }
  k.B = B;
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(params.payload_inertia).eigenvalues();
  k.lambda_min_J0 = ev(0);
  k.lambda_max_J0 = ev(2);
  return k;
}

double estimate_B(const SystemParams& params, const PayloadCommand& command, double horizon,
                  int samples, double safety) {
  if (samples < 1 || !(horizon >= 0.0)) {
    throw Error(Errc::precondition, "estimate_B needs samples >= 1 and horizon >= 0");
  }
  const CertificateConstants k = certificate_constants(params, 0.0);
  const double scale = std::max(k.gamma, *std::max_element(k.sigma.begin(), k.sigma.end()));
  const Mat3& J0 = params.payload_inertia;
  const double d_gain = (2.0 * J0 - J0.trace() * Mat3::Identity()).norm();  // Frobenius >= 2-norm
  double worst = 0.0;
  for (int s = 0; s <= samples; ++s) {
    const double t = samples == 0 ? 0.0 : horizon * s / samples;
    const CommandSample c = command.at(t);
    const double force = params.payload_mass * (c.a - params.gravity * kE3).norm();
    const double moment = k.lambda_max_J0 * (c.Omega.squaredNorm() + c.Omega_dot.norm());
    worst = std::max({worst, scale * (force + moment), d_gain * c.Omega.norm()});
  }
  return safety * worst;
}

OuterLoopReport outer_loop_matrices(const SystemParams& params, const GainSet& gains,
                                    const ErrorDomain& domain,
                                    const CertificateConstants& constants,
                                    const CrossConstants& c) {
  const double n = static_cast<double>(params.n());
  const double a0 = domain.alpha0();
  const double a = domain.alpha_q();
  const double beta = constants.beta;
  const double gamma = constants.gamma;
  const double B = constants.B;
  const double lam_lo = constants.lambda_min_J0;
  const double lam_hi = constants.lambda_max_J0;
  const double kx = gains.k_x0, kv = gains.k_v0, kR = gains.k_R0, kW = gains.k_Omega0;
  const double kq = gains.k_q, kw = gains.k_omega;

  OuterLoopReport r;
  r.c = c;
  r.P_lower_x = 0.5 * sym2(kx, -c.c_x, 1.0);
  r.P_upper_x = 0.5 * sym2(kx, c.c_x, 1.0);
  r.P_lower_R = 0.5 * sym2(2.0 * kR, -c.c_R * lam_hi, lam_lo);
  r.P_upper_R = 0.5 * sym2(2.0 * kR / (2.0 - domain.psi_R0), c.c_R * lam_hi, lam_hi);
  r.P_lower_q = 0.5 * sym2(2.0 * kq, -c.c_q, 1.0);
  r.P_upper_q = 0.5 * sym2(2.0 * kq / (2.0 - domain.psi_q), c.c_q, 1.0);
  r.lambda_min_bounds = std::min({min_eigenvalue(r.P_lower_x), min_eigenvalue(r.P_upper_x),
                                  min_eigenvalue(r.P_lower_R), min_eigenvalue(r.P_upper_R),
                                  min_eigenvalue(r.P_lower_q), min_eigenvalue(r.P_upper_q)});
  r.domain_admissible = n * a * beta < 1.0;

  const double nab = n * a * beta;
  r.lambda_min_W = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < params.n(); ++i) {
    const double delta = constants.delta[i];
    const double sigma = constants.sigma[i];
    const double nas = n * a * sigma;
    AgentBlocks b;
    b.W_x = sym2(c.c_x * kx * (1.0 - nab), -0.5 * c.c_x * kv * (1.0 + nab),
                 kv * (1.0 - nab) - c.c_x) / n;
    b.W_R = sym2(c.c_R * kR * (1.0 - nas), -0.5 * c.c_R * (kW + B + nas),
                 kW * (1.0 - nas) - 2.0 * c.c_R * lam_hi) / n;
    b.W_q = sym2(c.c_q * kq, -0.5 * c.c_q * kw, kw - c.c_q);
    b.W_xR << gamma * c.c_x * kR + delta * c.c_R * kx, gamma * c.c_x * kW + delta * kx,
        gamma * kR + delta * c.c_R * kv, gamma * kW + delta * kv;
    b.W_xR *= a;
    b.W_xq << c.c_x * B, 0.0, beta * kx * domain.e_x_max + B, 0.0;
    b.W_Rq << c.c_R * B, 0.0, a0 * sigma * kR + B, 0.0;

    const double xR = -0.5 * spectral_norm(b.W_xR);
    const double xq = -0.5 * spectral_norm(b.W_xq);
    const double Rq = -0.5 * spectral_norm(b.W_Rq);
    b.W << min_eigenvalue(b.W_x), xR, xq,
           xR, min_eigenvalue(b.W_R), Rq,
           xq, Rq, min_eigenvalue(b.W_q);
    b.lambda_min_W = min_eigenvalue3(b.W);
    r.lambda_min_W = std::min(r.lambda_min_W, b.lambda_min_W);
    r.agents.push_back(b);
  }
  r.pass = r.domain_admissible && r.lambda_min_bounds > 0.0 && r.lambda_min_W > 0.0;
  return r;
}

std::optional<CrossConstants> search_cross_constants(const SystemParams& params,
                                                     const GainSet& gains,
                                                     const ErrorDomain& domain,
                                                     const CertificateConstants& constants,
                                                     const CrossConstantSearch& grid,
                                                     Execution exec) {
  const GridBest best = grid_search(params, gains, domain, constants, grid, exec);
  if (!(best.value > 0.0)) return std::nullopt;
  return best.c;
}

InnerLoopReport inner_loop_certificate(const Mat3& J, double k_R, double k_Omega, double psi_R) {
  if (!(psi_R < 2.0)) throw Error(Errc::precondition, "psi_R < 2");
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(J).eigenvalues();
  const double lm = ev(0);
  const double lM = ev(2);
  if (!(lm > 0.0)) throw Error(Errc::precondition, "J positive-definite");

  InnerLoopReport r;
  r.c3_max = std::min(std::sqrt(k_R * lm),
                      4.0 * k_R * k_Omega * lm * lm / (k_Omega * k_Omega * lM + 4.0 * k_R * lm * lm));
  r.c3 = 0.5 * r.c3_max;
  const double c3 = r.c3;
  r.L1 = sym2(0.5 * k_R, -0.5 * c3, 0.5 * lm);
  r.L2 = sym2(k_R / (2.0 - psi_R), 0.5 * c3, 0.5 * lM);
  r.U = sym2(c3 * k_R / lM, -c3 * k_Omega / (2.0 * lm), k_Omega - c3);
  r.lambda_min_L1 = min_eigenvalue(r.L1);
  r.lambda_min_L2 = min_eigenvalue(r.L2);
  r.lambda_min_U = min_eigenvalue(r.U);
  r.pass = r.lambda_min_L1 > 0.0 && r.lambda_min_L2 > 0.0 && r.lambda_min_U > 0.0;
  return r;
}

CertificateReport certify(const SystemParams& params, const GainSet& gains,
                          const ErrorDomain& domain, double B, double psi_R,
                          const CrossConstantSearch& grid, Execution exec) {
  CertificateReport report;
  report.domain = domain;
  report.constants = certificate_constants(params, B);
  const GridBest best = grid_search(params, gains, domain, report.constants, grid, exec);
  report.feasible = best.value > 0.0;
  if (best.index >= 0) {
    report.outer = outer_loop_matrices(params, gains, domain, report.constants, best.c);
  }
  bool inner_ok = true;
  for (const AgentParams& a : params.agents) {
    report.inner.push_back(inner_loop_certificate(a.inertia, gains.k_R, gains.k_Omega, psi_R));
    inner_ok = inner_ok && report.inner.back().pass;
  }
  report.pass = report.feasible && report.outer && report.outer->pass && inner_ok;
  return report;
}

nlohmann::json to_json(const CertificateReport& report) {
  using nlohmann::json;
  const CertificateConstants& k = report.constants;
  json j;
  j["verdict"] = report.pass ? "pass" : "fail";
  j["feasible"] = report.feasible;
  j["domain"] = {{"e_x_max", report.domain.e_x_max},
                 {"psi_R0", report.domain.psi_R0},
                 {"psi_q", report.domain.psi_q},
                 {"alpha0", report.domain.alpha0()},
                 {"alpha_q", report.domain.alpha_q()}};
  j["constants"] = {{"lambda_min_PPt", k.lambda_min_PPt}, {"gamma", k.gamma},   {"beta", k.beta},
                    {"delta", k.delta},                   {"sigma", k.sigma},   {"B", k.B},
                    {"lambda_min_J0", k.lambda_min_J0},   {"lambda_max_J0", k.lambda_max_J0}};
  if (report.outer) {
    const OuterLoopReport& o = *report.outer;
    json outer;
    outer["c_x"] = o.c.c_x;
    outer["c_R"] = o.c.c_R;
    outer["c_q"] = o.c.c_q;
    outer["domain_admissible"] = o.domain_admissible;
    outer["P_lower_x"] = mat2_json(o.P_lower_x);
    outer["P_upper_x"] = mat2_json(o.P_upper_x);
    outer["P_lower_R"] = mat2_json(o.P_lower_R);
    outer["P_upper_R"] = mat2_json(o.P_upper_R);
    outer["P_lower_q"] = mat2_json(o.P_lower_q);
    outer["P_upper_q"] = mat2_json(o.P_upper_q);
    outer["lambda_min_bounds"] = o.lambda_min_bounds;
    outer["lambda_min_W"] = o.lambda_min_W;
    outer["pass"] = o.pass;
    json agents = json::array();
    for (const AgentBlocks& b : o.agents) {
      agents.push_back({{"W_x", mat2_json(b.W_x)},
                        {"W_R", mat2_json(b.W_R)},
                        {"W_q", mat2_json(b.W_q)},
                        {"W_xR", mat_json(b.W_xR)},
                        {"W_xq", mat_json(b.W_xq)},
                        {"W_Rq", mat_json(b.W_Rq)},
                        {"W", mat_json(b.W)},
                        {"lambda_min_W", b.lambda_min_W}});
    }
    outer["agents"] = agents;
    j["outer"] = outer;
  }
  json inner = json::array();
  for (const InnerLoopReport& r : report.inner) {
    inner.push_back({{"c3_max", r.c3_max},
                     {"c3", r.c3},
                     {"L1", mat2_json(r.L1)},
                     {"L2", mat2_json(r.L2)},
                     {"U", mat2_json(r.U)},
                     {"pass", r.pass}});
  }
  j["inner"] = inner;
  return j;
}

double lyapunov_value(const GainSet& gains, const CrossConstants& c, const Mat3& J0,
                      const PayloadErrors& e, std::span<const LinkErrorTerms> links) {
  double v = 0.5 * e.e_v.squaredNorm() + 0.5 * gains.k_x0 * e.e_x.squaredNorm() +
             c.c_x * e.e_x.dot(e.e_v) + 0.5 * e.e_Omega.dot(J0 * e.e_Omega) +
             gains.k_R0 * e.psi_R + c.c_R * e.e_R.dot(J0 * e.e_Omega);
  for (const LinkErrorTerms& l : links) {
    v += 0.5 * l.e_omega.squaredNorm() + gains.k_q * l.psi + c.c_q * l.e_q.dot(l.e_omega);
  }
  return v;
}

}  // namespace multilift
