#include "multilift/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "multilift/attitude_controller.hpp"
#include "multilift/error.hpp"
#include "multilift/payload_controller.hpp"

namespace multilift {

namespace {

// Controller output held between control ticks.
struct Actuation {
  ControlInput input;
  AllocationResult allocation;
  std::vector<AttitudeSetpoint> setpoints;
  std::vector<double> thrust;
  std::vector<Vec3> moment;
};

class ClosedLoop {
 public:
  explicit ClosedLoop(const Scenario& s)
      : s_(s),
        command_(s.command),
        controller_(s.params, s.gains),
        attitude_(s.params.n()) {}

  Actuation compute(const SystemState& state, double dt_control) {
    const std::size_t n = s_.params.n();
    Actuation a;
    a.allocation = controller_.compute(state, command_, dt_control);
    if (s_.sim.model == Model::simplified) {
      a.input = ControlInput::ideal(a.allocation.u);
      a.thrust.resize(n);
      for (std::size_t i = 0; i < n; ++i) a.thrust[i] = a.allocation.u[i].norm();
      a.moment.assign(n, Vec3::Zero());
      return a;
    }
    a.setpoints.resize(n);
    a.thrust.resize(n);
    a.moment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& u = a.allocation.u[i];
      a.setpoints[i] = attitude_[i].update(u, s_.headings[i].at(state.t), dt_control);
      const RotorCommand rc = rotor_command(state.agents[i], a.setpoints[i], s_.gains,
                                            s_.params.agents[i].inertia, u);
      a.thrust[i] = rc.thrust;
      a.moment[i] = rc.moment;
    }
    std::vector<double> applied = a.thrust;
    if (s_.sim.clamp_thrust) {
      for (double& f : applied) {
        if (f < 0.0) {
          f = 0.0;
          ++clamp_events_;
        }
      }
    }
    a.input = ControlInput::full(std::move(applied), a.moment);
    return a;
  }

  const SinusoidCommand& command() const { return command_; }
  std::size_t clamp_events() const { return clamp_events_; }

 private:
  const Scenario& s_;
  SinusoidCommand command_;
  PayloadController controller_;
  std::vector<AttitudeSetpointFilter> attitude_;
  std::size_t clamp_events_ = 0;
};

TelemetryRecord record(const Scenario& s, const SystemState& state, const Actuation* act,
                       const CommandSample& cmd) {
  const std::size_t n = s.params.n();
  TelemetryRecord r;
  r.t = state.t;
  r.x0 = state.x0;
  r.e_x = state.x0 - cmd.x;
  r.psi0 = 0.5 * (state.R0 - cmd.R).squaredNorm();
  r.psi_q.assign(n, 0.0);
  r.psi_R.assign(n, 0.0);
  r.tension.assign(n, 0.0);
  r.thrust.assign(n, 0.0);
  r.moment.assign(n, Vec3::Zero());
  r.energy = total_energy(s.params, state).total;
  r.state = state;
  if (act == nullptr) return r;

  const AllocationResult& al = act->allocation;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& q = state.agents[i].q;
    r.psi_q[i] = 0.5 * (q - al.setpoints[i].q).squaredNorm();
    r.tension[i] = -al.mu[i].dot(q);
    r.thrust[i] = act->thrust[i];
    r.moment[i] = act->moment[i];
    if (!act->setpoints.empty()) {
      r.psi_R[i] = 0.5 * (state.agents[i].R - act->setpoints[i].R_c).squaredNorm();
    }
    r.flags.negative_thrust = r.flags.negative_thrust || act->thrust[i] < 0.0;
    r.flags.domain_exit = r.flags.domain_exit || 1.0 - q.dot(al.setpoints[i].q) > s.domain.psi_q;
  }
  r.flags.domain_exit = r.flags.domain_exit || al.errors.e_x.norm() > s.domain.e_x_max ||
                        al.errors.psi_R > s.domain.psi_R0;
  r.flags.degenerate_tension = al.degenerate_tension;
  return r;
}

void summarize(RunResult& result, const Scenario& s, bool passive) {
  RunSummary& sum = result.summary;
  const auto& tel = result.telemetry;
  if (tel.empty()) return;
  const TelemetryRecord& last = tel.back();
  sum.final_e_x = last.e_x.norm();
  sum.final_psi0 = last.psi0;
  sum.final_psi_q = last.psi_q.empty() ? 0.0 : *std::max_element(last.psi_q.begin(), last.psi_q.end());
  sum.max_tension = -std::numeric_limits<double>::infinity();
  sum.min_thrust = std::numeric_limits<double>::infinity();
  for (const TelemetryRecord& r : tel) {
    for (double x : r.tension) sum.max_tension = std::max(sum.max_tension, x);
    for (double f : r.thrust) sum.min_thrust = std::min(sum.min_thrust, f);
    sum.any_domain_exit = sum.any_domain_exit || r.flags.domain_exit;
    sum.any_negative_thrust = sum.any_negative_thrust || r.flags.negative_thrust;
    sum.any_degenerate_tension = sum.any_degenerate_tension || r.flags.degenerate_tension;
  }
  if (passive) {
    const double e0 = tel.front().energy;
    const Vec3 p0 = linear_momentum(s.params, tel.front().state);
    double de = 0.0;
    double dp = 0.0;
    for (const TelemetryRecord& r : tel) {
      de = std::max(de, std::abs(r.energy - e0));
      const Vec3 dpv = linear_momentum(s.params, r.state) - p0;
      dp = std::max(dp, std::hypot(dpv(0), dpv(1)));
    }
    sum.energy_drift = de / std::max(std::abs(e0), 1.0);
    sum.horizontal_momentum_drift = dp;
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  return out;
}

// Minimal SVG line chart.
struct Series {
  std::string label;
  std::vector<double> y;
  const char* color;
};

constexpr const char* kPalette[] = {"#1f4fd6", "#1a9641", "#d7301f", "#984ea3", "#ff7f00", "#4d4d4d"};

std::string svg_chart(const std::string& title, const std::vector<double>& t,
                      const std::vector<Series>& series) {
  const double W = 640, H = 360, L = 70, R = 150, T = 40, B = 45;
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const Series& s : series) {
    for (double v : s.y) {
      if (std::isfinite(v)) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
  }
  if (!std::isfinite(ymin)) ymin = ymax = 0.0;
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double t0 = t.front();
  const double t1 = t.back() > t0 ? t.back() : t0 + 1.0;
  const auto px = [&](double x) { return L + (x - t0) / (t1 - t0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"22\" font-size=\"14\">", L);
  s += buf + title + "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                W - L - R, H - T - B);
  s += buf;
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    const double tv = t0 + (t1 - t0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.3g</text>\n", L - 6,
                  py(yv) + 4, yv);
    s += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.3g</text>\n", px(tv),
                  H - B + 16, tv);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">t [s]</text>\n",
                L + (W - L - R) / 2, H - 8);
  s += buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& se = series[k];
    s += "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"";
    s += se.color;
    s += "\" points=\"";
    for (std::size_t j = 0; j < se.y.size() && j < t.size(); ++j) {
      if (!std::isfinite(se.y[j])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(t[j]), py(se.y[j]));
      s += buf;
    }
    s += "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">", W - R + 10,
                  T + 16.0 * static_cast<double>(k + 1), se.color);
    s += buf + se.label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

RunResult run(const Scenario& s, const RunOptions& options) {
  const std::size_t n = s.params.n();
  const double dt = s.sim.dt;
  const auto steps = static_cast<std::size_t>(std::llround(s.sim.t_final / dt));
  const auto log_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.sim.log_interval / dt)));
  const auto divisor = static_cast<std::size_t>(s.sim.control_divisor);
  const double dt_control = dt * static_cast<double>(divisor);

  const SinusoidCommand command(s.command);
  std::optional<ClosedLoop> loop;
  if (!options.passive) loop.emplace(s);

  RunResult result;
  SystemState state = s.initial;
  state.t = 0.0;
  Actuation act;
  act.input = ControlInput::zero(n);

  for (std::size_t k = 0;; ++k) {
    try {
      if (loop && k % divisor == 0) act = loop->compute(state, dt_control);
      if (k % log_every == 0 || k == steps) {
        result.telemetry.push_back(record(s, state, loop ? &act : nullptr, command.at(state.t)));
      }
      if (k == steps) break;
      state = step(s.params, state, act.input, dt);
      state.t = static_cast<double>(k + 1) * dt;
      ++result.summary.steps;
    } catch (const Error& e) {
      if (e.code() != Errc::non_finite && e.code() != Errc::degenerate &&
          e.code() != Errc::singular_mass) {
        throw;
      }
      result.summary.aborted = true;
      result.summary.abort_reason = e.what();
      break;
    }
  }
  summarize(result, s, options.passive);
  if (loop && loop->clamp_events() > 0) {
    result.summary.thrust_clamp_events = loop->clamp_events();
    std::fprintf(stderr, "warning: %zu negative thrust commands clamped to zero in '%s'\n",
                 loop->clamp_events(), s.name.c_str());
  }
  return result;
}

std::string csv_header(std::size_t n) {
  std::string h = "t,x0_x,x0_y,x0_z,ex_x,ex_y,ex_z,psi0";
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string k = std::to_string(i);
    h += ",psi_q" + k + ",psi_R" + k + ",tension" + k + ",f" + k + ",M" + k + "_x,M" + k + "_y,M" + k + "_z";
  }
  h += ",energy,domain_exit,negative_thrust,degenerate_tension";
  return h;
}

void write_csv(const std::vector<TelemetryRecord>& tel, const std::filesystem::path& path) {
  if (tel.empty()) throw Error(Errc::precondition, "telemetry is empty");
  const std::size_t n = tel.front().psi_q.size();
  std::ofstream out = open_out(path);
  out << csv_header(n) << '\n';
  for (const TelemetryRecord& r : tel) {
    std::string line = fmt(r.t);
    for (int k = 0; k < 3; ++k) line += ',' + fmt(r.x0(k));
    for (int k = 0; k < 3; ++k) line += ',' + fmt(r.e_x(k));
    line += ',' + fmt(r.psi0);
    for (std::size_t i = 0; i < n; ++i) {
      line += ',' + fmt(r.psi_q[i]) + ',' + fmt(r.psi_R[i]) + ',' + fmt(r.tension[i]) + ',' + fmt(r.thrust[i]);
      for (int k = 0; k < 3; ++k) line += ',' + fmt(r.moment[i](k));
    }
    line += ',' + fmt(r.energy);
    line += r.flags.domain_exit ? ",1" : ",0";
    line += r.flags.negative_thrust ? ",1" : ",0";
    line += r.flags.degenerate_tension ? ",1" : ",0";
    out << line << '\n';
  }
  if (!out) throw Error(Errc::io_error, "write failed: " + path.string());
}

std::vector<std::filesystem::path> write_svg_panels(const std::vector<TelemetryRecord>& tel,
                                                    const std::filesystem::path& dir) {
  if (tel.empty()) throw Error(Errc::precondition, "telemetry is empty");
  const std::size_t n = tel.front().psi_q.size();
  std::vector<double> t;
  for (const TelemetryRecord& r : tel) t.push_back(r.t);
  const auto column = [&](auto&& f) {
    std::vector<double> y;
    y.reserve(tel.size());
    for (const TelemetryRecord& r : tel) y.push_back(f(r));
    return y;
  };
  const auto per_agent = [&](const std::string& name, auto&& f) {
    std::vector<Series> s;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back({name + std::to_string(i + 1), column([&](const TelemetryRecord& r) { return f(r, i); }),
                   kPalette[i % 6]});
    }
    return s;
  };

  std::vector<std::pair<std::string, std::string>> panels;
  {
    std::vector<Series> s;
    const char* axes[] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k) {
      s.push_back({std::string("x0_") + axes[k], column([&](const TelemetryRecord& r) { return r.x0(k); }),
                   kPalette[k]});
      s.push_back({std::string("x0d_") + axes[k],
                   column([&](const TelemetryRecord& r) { return r.x0(k) - r.e_x(k); }), kPalette[3 + k]});
    }
    panels.emplace_back("position.svg", svg_chart("Payload position x0 and x0d [m]", t, s));
  }
  panels.emplace_back("psi0.svg", svg_chart("Payload attitude error Psi0", t,
                                            {{"Psi0", column([](const TelemetryRecord& r) { return r.psi0; }),
                                              kPalette[0]}}));
  panels.emplace_back("psi_q.svg", svg_chart("Link direction error Psi_q", t,
                                             per_agent("q", [](const TelemetryRecord& r, std::size_t i) {
                                               return r.psi_q[i];
                                             })));
  panels.emplace_back("psi_R.svg", svg_chart("Quadrotor attitude error Psi_i", t,
                                             per_agent("R", [](const TelemetryRecord& r, std::size_t i) {
                                               return r.psi_R[i];
                                             })));
  panels.emplace_back("tension.svg", svg_chart("Link tension [N]", t,
                                               per_agent("T", [](const TelemetryRecord& r, std::size_t i) {
                                                 return r.tension[i];
                                               })));
  {
    std::vector<Series> s = per_agent("f", [](const TelemetryRecord& r, std::size_t i) { return r.thrust[i]; });
    std::vector<Series> m = per_agent("|M|", [](const TelemetryRecord& r, std::size_t i) {
      return r.moment[i].norm();
    });
    for (std::size_t i = 0; i < m.size(); ++i) m[i].color = kPalette[(i + 3) % 6];
    s.insert(s.end(), m.begin(), m.end());
    panels.emplace_back("inputs.svg", svg_chart("Thrust f_i [N] and moment |M_i| [Nm]", t, s));
  }

  std::vector<std::filesystem::path> written;
  for (const auto& [name, body] : panels) {
    const std::filesystem::path p = dir / name;
    std::ofstream out = open_out(p);
    out << body;
    if (!out) throw Error(Errc::io_error, "write failed: " + p.string());
    written.push_back(p);
  }
  return written;
}

void write_paths(const std::vector<TelemetryRecord>& tel, const SystemParams& params,
                 const std::filesystem::path& path) {
  if (tel.empty()) throw Error(Errc::precondition, "telemetry is empty");
  std::ofstream out = open_out(path);
  out << "# body payload\n";
  for (const TelemetryRecord& r : tel) {
    out << fmt(r.t) << ' ' << fmt(r.x0(0)) << ' ' << fmt(r.x0(1)) << ' ' << fmt(r.x0(2)) << '\n';
  }
  out << "# body payload_desired\n";
  for (const TelemetryRecord& r : tel) {
    const Vec3 d = r.x0 - r.e_x;
    out << fmt(r.t) << ' ' << fmt(d(0)) << ' ' << fmt(d(1)) << ' ' << fmt(d(2)) << '\n';
  }
  for (std::size_t i = 0; i < params.n(); ++i) {
    out << "\n# body quadrotor" << i + 1 << '\n';
    for (const TelemetryRecord& r : tel) {
      const Vec3 x = quadrotor_positions(params, r.state)[i];
      out << fmt(r.t) << ' ' << fmt(x(0)) << ' ' << fmt(x(1)) << ' ' << fmt(x(2)) << '\n';
    }
  }
  if (!out) throw Error(Errc::io_error, "write failed: " + path.string());
}

void emit_outputs(const std::vector<TelemetryRecord>& tel, const Scenario& scenario,
                  const std::filesystem::path& dir) {
  if (tel.empty()) throw Error(Errc::precondition, "telemetry is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
  write_csv(tel, dir / "telemetry.csv");
  if (scenario.output.svg) write_svg_panels(tel, dir);
  if (scenario.output.path) write_paths(tel, scenario.params, dir / "paths.txt");
}

}  // namespace multilift
