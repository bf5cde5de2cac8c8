#include "multilift/payload_controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "multilift/error.hpp"

namespace multilift {

void GainSet::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) {
      throw Error(Errc::validation_error, std::string(name) + " > 0");
    }
  };
  positive(k_x0, "k_x0");
  positive(k_v0, "k_v0");
  positive(k_R0, "k_R0");
  positive(k_Omega0, "k_Omega0");
  positive(k_q, "k_q");
  positive(k_omega, "k_omega");
  positive(k_R, "k_R");
  positive(k_Omega, "k_Omega");
  positive(epsilon, "epsilon");
  if (epsilon > 1.0) throw Error(Errc::validation_error, "epsilon <= 1");
}

AllocationMatrix build_P(std::span<const Vec3> attachments) {
  const auto n = static_cast<Eigen::Index>(attachments.size());
  AllocationMatrix out;
  out.P = Eigen::MatrixXd::Zero(6, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.P.block<3, 3>(0, 3 * i) = Mat3::Identity();
    out.P.block<3, 3>(3, 3 * i) = hat(attachments[static_cast<std::size_t>(i)]);
  }
  if (n == 0) return out;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.P);
  out.singular_values = svd.singularValues();
  const double threshold = 1e-10 * out.singular_values(0);
  out.rank = static_cast<int>((out.singular_values.array() > threshold).count());
  return out;
}

PayloadErrors payload_errors(const SystemState& state, const CommandSample& command) {
  PayloadErrors e;
  e.e_x = state.x0 - command.x;
  e.e_v = state.v0 - command.v;
  const AttitudeError att = attitude_error(state.R0, command.R, state.Omega0, command.Omega);
  e.e_R = att.e_R;
  e.e_Omega = att.e_Omega;
  e.psi_R = att.psi;
  return e;
}

Wrench desired_wrench(const PayloadErrors& errors, const CommandSample& command, const Mat3& J0,
                      double m0, double gravity, const GainSet& gains, const Mat3& R0) {
  Wrench w;
  w.force = m0 * (-gains.k_x0 * errors.e_x - gains.k_v0 * errors.e_v + command.a - gravity * kE3);
  const Mat3 rel = R0.transpose() * command.R;
  const Vec3 Wd = rel * command.Omega;
  w.moment = -gains.k_R0 * errors.e_R - gains.k_Omega0 * errors.e_Omega + hat(Wd) * J0 * Wd +
             J0 * rel * command.Omega_dot;
  return w;
}

std::vector<Vec3> allocate_min_norm(const AllocationMatrix& P, const Mat3& R0,
                                    const Wrench& wrench) {
  if (P.rank < 6) {
    throw Error(Errc::rank_deficient, "rank(P) = " + std::to_string(P.rank) + " < 6");
  }
  Eigen::Matrix<double, 6, 1> b;
  b << R0.transpose() * wrench.force, wrench.moment;
  const Eigen::Matrix<double, 6, 6> PPt = P.P * P.P.transpose();
  const Eigen::VectorXd body = P.P.transpose() * PPt.ldlt().solve(b);
  const auto n = static_cast<std::size_t>(P.P.cols() / 3);
  std::vector<Vec3> mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = R0 * body.segment<3>(3 * static_cast<Eigen::Index>(i));
  }
  return mu;
}

std::vector<Vec3> link_attachment_accel(const SystemParams& params, const SystemState& state,
                                        std::span<const Vec3> mu) {
  const std::size_t n = params.n();
  if (mu.size() != n) throw Error(Errc::dimension_mismatch, "one tension per agent required");
  const Mat3& R0 = state.R0;
  const Mat3& J0 = params.payload_inertia;
  const Mat3 W0hat = hat(state.Omega0);

  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
  for (std::size_t j = 0; j < n; ++j) {
    force += mu[j];
    moment += hat(params.agents[j].attachment) * R0.transpose() * mu[j];
  }
  const Vec3 spin = J0.ldlt().solve(W0hat * J0 * state.Omega0 - moment);

  std::vector<Vec3> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& rho = params.agents[i].attachment;
    a[i] = force / params.payload_mass + R0 * W0hat * W0hat * rho + R0 * hat(rho) * spin;
  }
  return a;
}

LinkSetpointFilter::LinkSetpointFilter(std::size_t n, double min_tension, double accel_tau)
    : history_(n), min_tension_(min_tension), accel_tau_(accel_tau) {
  if (!(accel_tau >= 0.0)) throw Error(Errc::precondition, "accel_tau >= 0");
}

void LinkSetpointFilter::reset() {
  for (History& h : history_) h = History{};
}

std::vector<LinkSetpoint> LinkSetpointFilter::update(std::span<const Vec3> mu_desired, double dt) {
  if (mu_desired.size() != history_.size()) {
    throw Error(Errc::dimension_mismatch, "one desired tension per link required");
  }
  const auto backward = [dt](const std::deque<Vec3>& y) {
    return ((3.0 * y[2] - 4.0 * y[1] + y[0]) / (2.0 * dt)).eval();
  };
  std::vector<LinkSetpoint> out(history_.size());
  for (std::size_t i = 0; i < history_.size(); ++i) {
    History& h = history_[i];
    LinkSetpoint& sp = out[i];
    const double tension = mu_desired[i].norm();
    if (!(tension >= min_tension_)) {
      sp.q = h.last_q.value_or(kE3);
      sp.degenerate = true;
      h.q.clear();
      h.omega.clear();
      h.omega_dot.setZero();
      continue;
    }
    sp.q = -mu_desired[i] / tension;
    h.last_q = sp.q;
    h.q.push_back(sp.q);
    if (h.q.size() > 3) h.q.pop_front();
    if (h.q.size() < 3) continue;

    sp.q_dot = backward(h.q);
    sp.omega = sp.q.cross(sp.q_dot);
    h.omega.push_back(sp.omega);
    if (h.omega.size() > 3) h.omega.pop_front();
    if (h.omega.size() == 3) {
      h.omega_dot += (dt / (accel_tau_ + dt)) * (backward(h.omega) - h.omega_dot);
      sp.omega_dot = h.omega_dot;
    }
  }
  return out;
}

Vec3 control_parallel(const AgentState& agent, const Vec3& mu, const Vec3& accel,
                      const AgentParams& params) {
  const Vec3& q = agent.q;
  return mu + params.mass * params.link_length * agent.omega.squaredNorm() * q +
         params.mass * q * q.dot(accel);
}

Vec3 control_normal(const AgentState& agent, const LinkSetpoint& setpoint, const Vec3& accel,
                    const GainSet& gains, const AgentParams& params) {
  const Vec3& q = agent.q;
  const Mat3 qhat = hat(q);
  const Mat3 qhat2 = qhat * qhat;
  const LinkError err = link_error(q, setpoint.q, agent.omega, setpoint.omega);
  const Vec3 q_dot = agent.omega.cross(q);
  const Vec3 inner = -gains.k_q * err.e_q - gains.k_omega * err.e_omega -
                     q.dot(setpoint.omega) * q_dot - qhat2 * setpoint.omega_dot;
  return params.mass * params.link_length * qhat * inner - params.mass * qhat2 * accel;
}

PayloadController::PayloadController(SystemParams params, GainSet gains,
                                     PayloadControllerOptions options)
    : params_(std::move(params)),
      gains_(gains),
      options_(options),
      P_(build_P(params_.attachments())),
      filter_(params_.n(), options.min_tension, options.link_accel_tau) {
  if (P_.rank < 6) {
    throw Error(Errc::rank_deficient, "attachment geometry gives rank(P) = " +
                                          std::to_string(P_.rank) + " < 6");
  }
}

void PayloadController::reset() {
  filter_.reset();
  flow_omega_dot_.assign(params_.n(), Vec3::Zero());
}

AllocationResult PayloadController::assemble(const SystemState& state,
                                             const CommandSample& command) {
  const std::size_t n = params_.n();
  if (state.agents.size() != n) throw Error(Errc::dimension_mismatch, "state agent count");

  AllocationResult r;
  r.errors = payload_errors(state, command);
  r.wrench = desired_wrench(r.errors, command, params_.payload_inertia, params_.payload_mass,
                            params_.gravity, gains_, state.R0);
  r.mu_desired = allocate_min_norm(P_, state.R0, r.wrench);

  r.mu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& q = state.agents[i].q;
    r.mu[i] = q * q.dot(r.mu_desired[i]);
  }
  r.attach_accel = link_attachment_accel(
      params_, state, options_.attach_accel_from_desired ? r.mu_desired : r.mu);
  return r;
}

void PayloadController::finish(const SystemState& state, AllocationResult& r) const {
  const std::size_t n = params_.n();
  r.u_parallel.resize(n);
  r.u_normal.resize(n);
  r.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState& a = state.agents[i];
    const AgentParams& p = params_.agents[i];
    r.u_parallel[i] = control_parallel(a, r.mu[i], r.attach_accel[i], p);
    r.u_normal[i] = control_normal(a, r.setpoints[i], r.attach_accel[i], gains_, p);
    r.u[i] = r.u_parallel[i] + r.u_normal[i];
    r.degenerate_tension = r.degenerate_tension || r.setpoints[i].degenerate;
  }
}

AllocationResult PayloadController::compute(const SystemState& state, const CommandSample& command,
                                            double dt) {
  AllocationResult r = assemble(state, command);
  r.setpoints = filter_.update(r.mu_desired, dt);
  finish(state, r);
  return r;
}

AllocationResult PayloadController::compute(const SystemState& state,
                                            const PayloadCommand& command, double dt) {
  if (options_.link_rates == LinkRateMode::finite_difference) {
    return compute(state, command.at(state.t), dt);
  }
  AllocationResult r = assemble(state, command.at(state.t));
  r.setpoints = link_setpoints_along_flow(params_, gains_, P_, state, command, options_.flow_step,
                                          options_.min_tension);
  if (flow_omega_dot_.size() != params_.n()) flow_omega_dot_.assign(params_.n(), Vec3::Zero());
  const double blend = dt / (options_.link_accel_tau + dt);
  for (std::size_t i = 0; i < params_.n(); ++i) {
    LinkSetpoint& sp = r.setpoints[i];
    if (sp.degenerate) {
      flow_omega_dot_[i].setZero();
      continue;
    }
    flow_omega_dot_[i] += blend * (sp.omega_dot - flow_omega_dot_[i]);
    sp.omega_dot = flow_omega_dot_[i];
  }
  finish(state, r);
  return r;
}

namespace {

struct FlowPoint {
  Vec3 x, v;
  Mat3 R;
  Vec3 W;
  std::vector<Vec3> q;
};

struct FlowContext {
  const SystemParams& params;
  const GainSet& gains;
  const AllocationMatrix& P;
  const PayloadCommand& command;
  const std::vector<Vec3>& omega;
};

std::vector<Vec3> desired_tensions(const FlowContext& c, const FlowPoint& p, double t) {
  SystemState s;
  s.x0 = p.x;
  s.v0 = p.v;
  s.R0 = p.R;
  s.Omega0 = p.W;
  const CommandSample cmd = c.command.at(t);
  const Wrench w = desired_wrench(payload_errors(s, cmd), cmd, c.params.payload_inertia,
                                  c.params.payload_mass, c.params.gravity, c.gains, p.R);
  return allocate_min_norm(c.P, p.R, w);
}

FlowPoint flow_rate(const FlowContext& c, const FlowPoint& p, double t) {
  const std::vector<Vec3> mu_d = desired_tensions(c, p, t);
  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
  FlowPoint d;
  d.q.resize(p.q.size());
  for (std::size_t i = 0; i < p.q.size(); ++i) {
    const Vec3 mu = p.q[i] * p.q[i].dot(mu_d[i]);
    force += mu;
    moment += hat(c.params.agents[i].attachment) * p.R.transpose() * mu;
    d.q[i] = c.omega[i].cross(p.q[i]);
  }
  const Mat3& J0 = c.params.payload_inertia;
  d.x = p.v;
  d.v = c.params.gravity * kE3 + force / c.params.payload_mass;
  d.R = p.R * hat(p.W);
  d.W = J0.ldlt().solve(moment - p.W.cross(J0 * p.W));
  return d;
}

FlowPoint axpy(const FlowPoint& p, const FlowPoint& d, double h) {
  FlowPoint o{p.x + h * d.x, p.v + h * d.v, p.R + h * d.R, p.W + h * d.W, p.q};
  for (std::size_t i = 0; i < o.q.size(); ++i) o.q[i] += h * d.q[i];
  return o;
}

FlowPoint rk4(const FlowContext& c, const FlowPoint& p, double t, double h) {
  const FlowPoint k1 = flow_rate(c, p, t);
  const FlowPoint k2 = flow_rate(c, axpy(p, k1, 0.5 * h), t + 0.5 * h);
  const FlowPoint k3 = flow_rate(c, axpy(p, k2, 0.5 * h), t + 0.5 * h);
  const FlowPoint k4 = flow_rate(c, axpy(p, k3, h), t + h);
  FlowPoint o = p;
  const double w = h / 6.0;
  o.x += w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
  o.v += w * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
  o.R += w * (k1.R + 2.0 * k2.R + 2.0 * k3.R + k4.R);
  o.W += w * (k1.W + 2.0 * k2.W + 2.0 * k3.W + k4.W);
  for (std::size_t i = 0; i < o.q.size(); ++i) {
    o.q[i] += w * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
  }
  return o;
}

}  // namespace

std::vector<LinkSetpoint> link_setpoints_along_flow(const SystemParams& params,
                                                    const GainSet& gains,
                                                    const AllocationMatrix& P,
                                                    const SystemState& state,
                                                    const PayloadCommand& command, double h,
                                                    double min_tension) {
  if (!(h > 0.0)) throw Error(Errc::precondition, "flow step h > 0");
  const std::size_t n = params.n();
  if (state.agents.size() != n) throw Error(Errc::dimension_mismatch, "state agent count");

  std::vector<Vec3> omega(n);
  FlowPoint p{state.x0, state.v0, state.R0, state.Omega0, std::vector<Vec3>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    p.q[i] = state.agents[i].q;
    omega[i] = state.agents[i].omega;
  }
  const FlowContext c{params, gains, P, command, omega};
  const double t = state.t;
  const std::vector<Vec3> mid = desired_tensions(c, p, t);
  const std::vector<Vec3> ahead = desired_tensions(c, rk4(c, p, t, h), t + h);
  const std::vector<Vec3> behind = desired_tensions(c, rk4(c, p, t, -h), t - h);

  std::vector<LinkSetpoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    LinkSetpoint& sp = out[i];
    const double tension = std::min({mid[i].norm(), ahead[i].norm(), behind[i].norm()});
    if (!(tension >= min_tension)) {
      sp.q = mid[i].norm() > 0.0 ? Vec3(-mid[i].normalized()) : kE3;
      sp.degenerate = true;
      continue;
    }
    sp.q = -mid[i].normalized();
    const Vec3 qa = -ahead[i].normalized();
    const Vec3 qb = -behind[i].normalized();
    sp.q_dot = (qa - qb) / (2.0 * h);
    sp.omega = sp.q.cross(sp.q_dot);
    sp.omega_dot = sp.q.cross((qa - 2.0 * sp.q + qb) / (h * h));
  }
  return out;
}

}  // namespace multilift
