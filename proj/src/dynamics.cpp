#include "multilift/dynamics.hpp"

#include <cmath>
#include <string>

#include "multilift/error.hpp"

namespace multilift {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::validation_error, what);
}

bool symmetric_pd(const Mat3& J) {
  if (!J.allFinite() || (J - J.transpose()).norm() > 1e-12 * (1.0 + J.norm())) return false;
  return Eigen::SelfAdjointEigenSolver<Mat3>(J).eigenvalues().minCoeff() > 0.0;
}

Eigen::Index link_offset(std::size_t i) { return 6 + 3 * static_cast<Eigen::Index>(i); }

void check_inputs(const SystemParams& params, const SystemState& state, std::size_t n_inputs) {
  if (state.agents.size() != params.n() || n_inputs != params.n()) {
    throw Error(Errc::dimension_mismatch, "expected " + std::to_string(params.n()) +
                                              " agents, got state " +
                                              std::to_string(state.agents.size()) + " input " +
                                              std::to_string(n_inputs));
  }
}

template <typename Solver>
void check_condition(const Solver& lu, const char* which) {
  const double rcond = lu.rcond();
  if (!(rcond * kMaxCondition >= 1.0)) {
    throw Error(Errc::singular_mass, std::string(which) + " reciprocal condition " +
                                         std::to_string(rcond));
  }
}

struct Rates {
  Vec3 x0_dot;
  Vec3 v0_dot;
  Mat3 R0_dot;
  Vec3 Omega0_dot;
  std::vector<Vec3> q_dot;
  std::vector<Vec3> omega_dot;
  std::vector<Mat3> R_dot;
  std::vector<Vec3> Omega_dot;
};

Rates rates(const SystemParams& params, const SystemState& s, const ControlInput& input) {
  const Accelerations acc = accelerations(params, s, input);
  const std::size_t n = params.n();
  Rates r;
  r.x0_dot = s.v0;
  r.v0_dot = acc.x0_ddot;
  r.R0_dot = s.R0 * hat(s.Omega0);
  r.Omega0_dot = acc.Omega0_dot;
  r.q_dot.resize(n);
  r.omega_dot = acc.omega_dot;
  r.R_dot.resize(n);
  r.Omega_dot = acc.Omega_dot;
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState& a = s.agents[i];
    r.q_dot[i] = a.omega.cross(a.q);
    r.R_dot[i] = a.R * hat(a.Omega);
  }
  return r;
}

SystemState advance(const SystemState& s, const Rates& r, double h) {
  SystemState out = s;
  out.t = s.t + h;
  out.x0 += h * r.x0_dot;
  out.v0 += h * r.v0_dot;
  out.R0 += h * r.R0_dot;
  out.Omega0 += h * r.Omega0_dot;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    AgentState& a = out.agents[i];
    a.q += h * r.q_dot[i];
    a.omega += h * r.omega_dot[i];
    a.R += h * r.R_dot[i];
    a.Omega += h * r.Omega_dot[i];
  }
  return out;
}

}  // namespace

double SystemParams::total_mass() const {
  double m = payload_mass;
  for (const auto& a : agents) m += a.mass;
  return m;
}

Mat3 SystemParams::augmented_inertia() const {
  Mat3 J = payload_inertia;
  for (const auto& a : agents) {
    const Mat3 r = hat(a.attachment);
    J -= a.mass * r * r;
  }
  return J;
}

std::vector<Vec3> SystemParams::attachments() const {
  std::vector<Vec3> rho;
  rho.reserve(agents.size());
  for (const auto& a : agents) rho.push_back(a.attachment);
  return rho;
}

void SystemParams::validate() const {
  require(!agents.empty(), "n >= 1");
  require(std::isfinite(payload_mass) && payload_mass > 0.0, "m0 > 0");
  require(symmetric_pd(payload_inertia), "J0 symmetric positive-definite");
  require(std::isfinite(gravity), "g finite");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    const std::string tag = "agent " + std::to_string(i + 1) + ": ";
    require(std::isfinite(a.mass) && a.mass > 0.0, tag + "m_i > 0");
    require(symmetric_pd(a.inertia), tag + "J_i symmetric positive-definite");
    require(std::isfinite(a.link_length) && a.link_length > 0.0, tag + "l_i > 0");
    require(a.attachment.allFinite(), tag + "rho_i finite");
  }
  require(symmetric_pd(augmented_inertia()), "augmented payload inertia positive-definite");
}

bool SystemState::all_finite() const {
  bool ok = std::isfinite(t) && x0.allFinite() && v0.allFinite() && R0.allFinite() &&
            Omega0.allFinite();
  for (const auto& a : agents) {
    ok = ok && a.q.allFinite() && a.omega.allFinite() && a.R.allFinite() && a.Omega.allFinite();
  }
  return ok;
}

ConstraintResidual constraint_residual(const SystemState& state) {
  ConstraintResidual r;
  r.orthogonality = orthogonality_error(state.R0);
  for (const auto& a : state.agents) {
    r.link_norm = std::max(r.link_norm, std::abs(a.q.norm() - 1.0));
    r.link_rate = std::max(r.link_rate, std::abs(a.omega.dot(a.q)));
    r.orthogonality = std::max(r.orthogonality, orthogonality_error(a.R));
  }
  return r;
}

ControlInput ControlInput::zero(std::size_t n) {
  return ideal(std::vector<Vec3>(n, Vec3::Zero()));
}

ControlInput ControlInput::ideal(std::vector<Vec3> u) {
  ControlInput in;
  in.kind = Kind::ideal_force;
  in.moment.assign(u.size(), Vec3::Zero());
  in.force = std::move(u);
  return in;
}

ControlInput ControlInput::full(std::vector<double> f, std::vector<Vec3> M) {
  ControlInput in;
  in.kind = Kind::thrust;
  in.thrust = std::move(f);
  in.moment = std::move(M);
  return in;
}

void ControlInput::check(std::size_t n) const {
  const std::size_t primary = kind == Kind::ideal_force ? force.size() : thrust.size();
  if (primary != n || moment.size() != n) {
    throw Error(Errc::dimension_mismatch, "control input sized for " + std::to_string(primary) +
                                              " agents, expected " + std::to_string(n));
  }
}

std::vector<Vec3> ControlInput::forces(const SystemState& state) const {
  if (kind == Kind::ideal_force) return force;
  std::vector<Vec3> u(thrust.size());
  for (std::size_t i = 0; i < thrust.size(); ++i) u[i] = -thrust[i] * (state.agents[i].R * kE3);
  return u;
}

MatrixForm assemble_matrix_form(const SystemParams& params, const SystemState& state,
                                std::span<const Vec3> u) {
  check_inputs(params, state, u.size());
  const std::size_t n = params.n();
  const Eigen::Index dim = 6 + 3 * static_cast<Eigen::Index>(n);
  const double g = params.gravity;
  const Mat3& R0 = state.R0;
  const Mat3 W0hat = hat(state.Omega0);
  const Mat3 Jbar = params.augmented_inertia();

  MatrixForm f;
  f.mass = Eigen::MatrixXd::Zero(dim, dim);
  f.rhs = Eigen::VectorXd::Zero(dim);

  f.mass.block<3, 3>(0, 0) = params.total_mass() * Mat3::Identity();
  f.mass.block<3, 3>(3, 3) = Jbar;
  Vec3 rhs_x = params.total_mass() * g * kE3;
  Vec3 rhs_W = -W0hat * Jbar * state.Omega0;

  for (std::size_t i = 0; i < n; ++i) {
    const AgentParams& p = params.agents[i];
    const AgentState& a = state.agents[i];
    const Mat3 rhat = hat(p.attachment);
    const Mat3 qhat = hat(a.q);
    const double m = p.mass;
    const double l = p.link_length;
    const Eigen::Index k = link_offset(i);

    f.mass.block<3, 3>(0, 3) += -m * R0 * rhat;
    f.mass.block<3, 3>(3, 0) += m * rhat * R0.transpose();
    f.mass.block<3, 3>(0, k) = m * l * qhat;
    f.mass.block<3, 3>(3, k) = m * l * rhat * R0.transpose() * qhat;
    f.mass.block<3, 3>(k, 0) = -m * l * qhat;
    f.mass.block<3, 3>(k, 3) = m * l * qhat * R0 * rhat;
    f.mass.block<3, 3>(k, k) = m * l * l * Mat3::Identity();

    const Vec3 centripetal = R0 * W0hat * W0hat * p.attachment;
    const double w2 = a.omega.squaredNorm();
    rhs_x += -(m * centripetal + m * l * w2 * a.q) + u[i];
    rhs_W += -m * l * rhat * R0.transpose() * (w2 * a.q) +
             rhat * R0.transpose() * (u[i] + m * g * kE3);
    f.rhs.segment<3>(k) = m * l * qhat * centripetal - l * qhat * (u[i] + m * g * kE3);
  }
  f.rhs.segment<3>(0) = rhs_x;
  f.rhs.segment<3>(3) = rhs_W;
  return f;
}

Accelerations solve_accelerations(const MatrixForm& form) {
  const Eigen::Index dim = form.mass.rows();
  if (form.mass.cols() != dim || form.rhs.size() != dim || dim < 9 || (dim - 6) % 3 != 0) {
    throw Error(Errc::dimension_mismatch, "malformed matrix form");
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(form.mass);
  check_condition(lu, "mass matrix");
  const Eigen::VectorXd sol = lu.solve(form.rhs);
  Accelerations acc;
  acc.x0_ddot = sol.segment<3>(0);
  acc.Omega0_dot = sol.segment<3>(3);
  const std::size_t n = static_cast<std::size_t>((dim - 6) / 3);
  acc.omega_dot.resize(n);
  for (std::size_t i = 0; i < n; ++i) acc.omega_dot[i] = sol.segment<3>(link_offset(i));
  return acc;
}

Accelerations solve_accelerations(const MatrixForm& form, const SystemParams& params,
                                  const SystemState& state, std::span<const Vec3> moments) {
  check_inputs(params, state, moments.size());
  Accelerations acc = solve_accelerations(form);
  acc.Omega_dot.resize(params.n());
  for (std::size_t i = 0; i < params.n(); ++i) {
    acc.Omega_dot[i] =
        quadrotor_attitude_accel(params.agents[i].inertia, state.agents[i].Omega, moments[i]);
  }
  return acc;
}

Mat3 link_mass_matrix(const SystemParams& params, const SystemState& state) {
  Mat3 Mq = params.payload_mass * Mat3::Identity();
  for (std::size_t i = 0; i < params.n(); ++i) {
    const Vec3& q = state.agents[i].q;
    Mq += params.agents[i].mass * q * q.transpose();
  }
  return Mq;
}

Accelerations accel_eliminated(const SystemParams& params, const SystemState& state,
                               std::span<const Vec3> u) {
  check_inputs(params, state, u.size());
  const std::size_t n = params.n();
  const Mat3& R0 = state.R0;
  const Mat3 W0hat = hat(state.Omega0);
  const Mat3& J0 = params.payload_inertia;

  Eigen::Matrix<double, 6, 6> A;
  A.setZero();
  A.block<3, 3>(0, 0) = link_mass_matrix(params, state);
  A.block<3, 3>(3, 3) = J0;
  Eigen::Matrix<double, 6, 1> b;
  b.setZero();
  b.segment<3>(3) = -W0hat * J0 * state.Omega0;

  std::vector<Vec3> u_perp(n);
  std::vector<Vec3> centripetal(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentParams& p = params.agents[i];
    const AgentState& a = state.agents[i];
    const double m = p.mass;
    const Mat3 rhat = hat(p.attachment);
    const Mat3 qqT = a.q * a.q.transpose();
    const Vec3 u_par = qqT * u[i];
    u_perp[i] = u[i] - u_par;
    centripetal[i] = R0 * W0hat * W0hat * p.attachment;

    A.block<3, 3>(0, 3) += -m * qqT * R0 * rhat;
    A.block<3, 3>(3, 0) += m * rhat * R0.transpose() * qqT;
    A.block<3, 3>(3, 3) += -m * rhat * R0.transpose() * qqT * R0 * rhat;

    const Vec3 drive = u_par - m * p.link_length * a.omega.squaredNorm() * a.q -
                       m * qqT * centripetal[i];
    b.segment<3>(0) += drive;
    b.segment<3>(3) += rhat * R0.transpose() * drive;
  }

  const Eigen::PartialPivLU<Eigen::Matrix<double, 6, 6>> lu(A);
  check_condition(lu, "payload block");
  const Eigen::Matrix<double, 6, 1> y = lu.solve(b);

  Accelerations acc;
  const Vec3 rel = y.segment<3>(0);  // x0_ddot - g e3
  acc.x0_ddot = rel + params.gravity * kE3;
  acc.Omega0_dot = y.segment<3>(3);
  acc.omega_dot.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentParams& p = params.agents[i];
    const Mat3 qhat = hat(state.agents[i].q);
    const Vec3 attach = rel - R0 * hat(p.attachment) * acc.Omega0_dot + centripetal[i];
    acc.omega_dot[i] = qhat * attach / p.link_length - qhat * u_perp[i] / (p.mass * p.link_length);
  }
  return acc;
}

Vec3 quadrotor_attitude_accel(const Mat3& J, const Vec3& Omega, const Vec3& M) {
  return J.ldlt().solve(M - Omega.cross(J * Omega));
}

Accelerations accelerations(const SystemParams& params, const SystemState& state,
                            const ControlInput& input) {
  input.check(params.n());
  const std::vector<Vec3> u = input.forces(state);
  return solve_accelerations(assemble_matrix_form(params, state, u), params, state, input.moment);
}

std::vector<Accelerations> accelerations_batch(const SystemParams& params,
                                               std::span<const AccelerationSample> samples,
                                               EquationForm form, Execution exec) {
  std::vector<Accelerations> out(samples.size());
  const auto eval = [&](std::size_t k) {
    const AccelerationSample& s = samples[k];
    out[k] = form == EquationForm::matrix
                 ? solve_accelerations(assemble_matrix_form(params, s.state, s.u))
                 : accel_eliminated(params, s.state, s.u);
  };
  const auto count = static_cast<std::ptrdiff_t>(samples.size());
  if (exec == Execution::serial) {
    for (std::ptrdiff_t k = 0; k < count; ++k) eval(static_cast<std::size_t>(k));
    return out;
  }
  // Exceptions may not cross the parallel region; the first one is rethrown.
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    try {
      eval(static_cast<std::size_t>(k));
    } catch (...) {
#pragma omp critical(multilift_batch_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

SystemState step(const SystemParams& params, const SystemState& state, const ControlInput& input,
                 double dt) {
  if (!(dt > 0.0 && dt <= kMaxStep)) {
    throw Error(Errc::precondition, "dt must lie in (0, 0.05], got " + std::to_string(dt));
  }
  const Rates k1 = rates(params, state, input);
  const Rates k2 = rates(params, advance(state, k1, 0.5 * dt), input);
  const Rates k3 = rates(params, advance(state, k2, 0.5 * dt), input);
  const Rates k4 = rates(params, advance(state, k3, dt), input);

  SystemState next = state;
  next.t = state.t + dt;
  const double w = dt / 6.0;
  next.x0 += w * (k1.x0_dot + 2.0 * k2.x0_dot + 2.0 * k3.x0_dot + k4.x0_dot);
  next.v0 += w * (k1.v0_dot + 2.0 * k2.v0_dot + 2.0 * k3.v0_dot + k4.v0_dot);
  next.R0 += w * (k1.R0_dot + 2.0 * k2.R0_dot + 2.0 * k3.R0_dot + k4.R0_dot);
  next.Omega0 += w * (k1.Omega0_dot + 2.0 * k2.Omega0_dot + 2.0 * k3.Omega0_dot + k4.Omega0_dot);
  for (std::size_t i = 0; i < params.n(); ++i) {
    AgentState& a = next.agents[i];
    a.q += w * (k1.q_dot[i] + 2.0 * k2.q_dot[i] + 2.0 * k3.q_dot[i] + k4.q_dot[i]);
    a.omega += w * (k1.omega_dot[i] + 2.0 * k2.omega_dot[i] + 2.0 * k3.omega_dot[i] +
                    k4.omega_dot[i]);
    a.R += w * (k1.R_dot[i] + 2.0 * k2.R_dot[i] + 2.0 * k3.R_dot[i] + k4.R_dot[i]);
    a.Omega += w * (k1.Omega_dot[i] + 2.0 * k2.Omega_dot[i] + 2.0 * k3.Omega_dot[i] +
                    k4.Omega_dot[i]);
  }
  if (!next.all_finite()) {
    throw Error(Errc::non_finite, "state became non-finite at t=" + std::to_string(next.t));
  }

  next.R0 = project_rotation(next.R0);
  for (AgentState& a : next.agents) {
    const Reprojected r = reproject(a.R, a.q, a.omega);
    a.R = r.R;
    a.q = r.q;
    a.omega = r.omega;
  }
  return next;
}

SystemState step(const SystemParams& params, const SystemState& state,
                 const ControlProvider& provider, double dt) {
  return step(params, state, provider(state), dt);
}

std::vector<Vec3> quadrotor_positions(const SystemParams& params, const SystemState& state) {
  std::vector<Vec3> x(params.n());
  for (std::size_t i = 0; i < params.n(); ++i) {
    const AgentParams& p = params.agents[i];
    x[i] = state.x0 + state.R0 * p.attachment - p.link_length * state.agents[i].q;
  }
  return x;
}

std::vector<Vec3> quadrotor_velocities(const SystemParams& params, const SystemState& state) {
  std::vector<Vec3> v(params.n());
  for (std::size_t i = 0; i < params.n(); ++i) {
    const AgentParams& p = params.agents[i];
    const AgentState& a = state.agents[i];
    v[i] = state.v0 + state.R0 * hat(state.Omega0) * p.attachment -
           p.link_length * a.omega.cross(a.q);
  }
  return v;
}

Energy total_energy(const SystemParams& params, const SystemState& state) {
  const double g = params.gravity;
  Energy e;
  e.kinetic = 0.5 * params.payload_mass * state.v0.squaredNorm() +
              0.5 * state.Omega0.dot(params.payload_inertia * state.Omega0);
  e.potential = -params.payload_mass * g * kE3.dot(state.x0);
  const std::vector<Vec3> x = quadrotor_positions(params, state);
  const std::vector<Vec3> v = quadrotor_velocities(params, state);
  for (std::size_t i = 0; i < params.n(); ++i) {
    const AgentParams& p = params.agents[i];
    const AgentState& a = state.agents[i];
    e.kinetic += 0.5 * p.mass * v[i].squaredNorm() + 0.5 * a.Omega.dot(p.inertia * a.Omega);
    e.potential -= p.mass * g * kE3.dot(x[i]);
  }
  e.total = e.kinetic + e.potential;
  return e;
}

Vec3 linear_momentum(const SystemParams& params, const SystemState& state) {
  Vec3 p = params.payload_mass * state.v0;
  const std::vector<Vec3> v = quadrotor_velocities(params, state);
  for (std::size_t i = 0; i < params.n(); ++i) p += params.agents[i].mass * v[i];
  return p;
}

}  // namespace multilift
