// Command-line front end: simulate, certify, passive, sweep.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "multilift/certifier.hpp"
#include "multilift/error.hpp"
#include "multilift/scenario.hpp"
#include "multilift/simulation.hpp"

namespace fs = std::filesystem;
using namespace multilift;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCertificate = 4;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::parse_error:
    case Errc::validation_error:
    case Errc::precondition:
    case Errc::io_error:
    case Errc::rank_deficient:
    case Errc::dimension_mismatch:
    case Errc::collinear_heading:
    case Errc::degenerate_tangent:
      return kExitInput;
    default:
      return kExitNumerical;
  }
}

nlohmann::json summary_json(const RunSummary& s) {
  nlohmann::json j;
  j["aborted"] = s.aborted;
  if (s.aborted) j["abort_reason"] = s.abort_reason;
  j["steps"] = s.steps;
  j["final_e_x"] = s.final_e_x;
  j["final_psi0"] = s.final_psi0;
  j["final_psi_q"] = s.final_psi_q;
  j["max_tension"] = s.max_tension;
  j["min_thrust"] = s.min_thrust;
  j["any_domain_exit"] = s.any_domain_exit;
  j["any_negative_thrust"] = s.any_negative_thrust;
  j["any_degenerate_tension"] = s.any_degenerate_tension;
  j["thrust_clamp_events"] = s.thrust_clamp_events;
  if (s.energy_drift) j["energy_drift"] = *s.energy_drift;
  if (s.horizontal_momentum_drift) j["horizontal_momentum_drift"] = *s.horizontal_momentum_drift;
  return j;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(Errc::parse_error, "--param expects path=v1,v2,... (got '" + spec + "')");
  }
  SweepAxis axis{spec.substr(0, eq), split(spec.substr(eq + 1), ',')};
  for (const std::string& v : axis.values) {
    if (v.empty()) throw Error(Errc::parse_error, "empty value in --param " + spec);
  }
  return axis;
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

std::vector<Overrides> cartesian(const std::vector<SweepAxis>& axes) {
  std::vector<Overrides> grid{{}};
  for (const SweepAxis& axis : axes) {
    std::vector<Overrides> next;
    for (const Overrides& base : grid) {
      for (const std::string& v : axis.values) {
        Overrides o = base;
        o.emplace_back(axis.key, v);
        next.push_back(std::move(o));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

struct SweepOutcome {
  int status = kExitOk;
  std::string message;
  RunSummary summary;
};

SweepOutcome sweep_one(const fs::path& scenario_path, const Overrides& overrides,
                       const fs::path& dir) {
  SweepOutcome out;
  try {
    const Scenario s = load_scenario(scenario_path, overrides);
    const RunResult r = run(s);
    fs::create_directories(dir);
    write_csv(r.telemetry, dir / "telemetry.csv");
    out.summary = r.summary;
    if (r.summary.aborted) {
      out.status = kExitNumerical;
      out.message = r.summary.abort_reason;
    }
  } catch (const Error& e) {
    out.status = exit_code_for(e.code());
    out.message = e.what();
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative cable-suspended payload transport: simulation and certificates"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::string model;
  double dt = 0.0;
  double t_final = 0.0;
  auto* simulate = app.add_subcommand("simulate", "Run the closed loop and write telemetry");
  simulate->add_option("--scenario", scenario_path, "Scenario file (TOML or JSON)")->required();
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--model", model, "simplified | full")
      ->check(CLI::IsMember({"simplified", "full"}));
  simulate->add_option("--dt", dt, "Integration step [s]");
  simulate->add_option("--tfinal", t_final, "Final time [s]");

  std::string domain_text;
  std::string cert_out = "certificate.json";
  bool serial = false;
  auto* certify_cmd = app.add_subcommand("certify", "Check the Lyapunov stability conditions");
  certify_cmd->add_option("--scenario", scenario_path, "Scenario file")->required();
  certify_cmd->add_option("--domain", domain_text, "e_x_max,psi_R0,psi_q");
  certify_cmd->add_option("--out", cert_out, "Certificate JSON path");
  certify_cmd->add_flag("--serial", serial, "Single-threaded grid search");

  auto* passive = app.add_subcommand("passive", "Zero-input energy and momentum audit");
  passive->add_option("--scenario", scenario_path, "Scenario file")->required();
  passive->add_option("--tfinal", t_final, "Final time [s]");

  std::vector<std::string> params;
  auto* sweep = app.add_subcommand("sweep", "Grid of runs over scenario parameters");
  sweep->add_option("--scenario", scenario_path, "Scenario file")->required();
  sweep->add_option("--param", params, "path=v1,v2,... (repeat for a cartesian grid)")
      ->required();
  sweep->add_option("--out", out_dir, "Output directory");
  sweep->add_flag("--serial", serial, "Run the grid on one thread");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      Overrides o;
      if (!model.empty()) o.emplace_back("sim.model", "\"" + model + "\"");
      if (dt > 0.0) o.emplace_back("sim.dt", std::to_string(dt));
      if (t_final > 0.0) o.emplace_back("sim.t_final", std::to_string(t_final));
      const Scenario s = load_scenario(scenario_path, o);
      const RunResult r = run(s);
      if (!r.telemetry.empty()) emit_outputs(r.telemetry, s, out_dir);
      std::cout << summary_json(r.summary).dump(2) << "\n";
      return r.summary.aborted ? kExitNumerical : kExitOk;
    }

    if (*certify_cmd) {
      const Scenario s = load_scenario(scenario_path);
      ErrorDomain domain = s.domain;
      if (!domain_text.empty()) {
        const auto parts = split(domain_text, ',');
        if (parts.size() != 3) throw Error(Errc::parse_error, "--domain expects three numbers");
        try {
          domain = {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
        } catch (const std::exception&) {
          throw Error(Errc::parse_error, "--domain expects three numbers");
        }
      }
      domain.validate();
      const SinusoidCommand command(s.command);
      const double B = estimate_B(s.params, command, s.sim.t_final, 2001);
      const CertificateReport report =
          certify(s.params, s.gains, domain, B, 1.0, {},
                  serial ? Execution::serial : Execution::parallel);
      std::ofstream f(cert_out);
      if (!f) throw Error(Errc::io_error, "cannot write " + cert_out);
      f << to_json(report).dump(2) << "\n";
      std::cout << (report.pass ? "certificate: pass" : "certificate: fail") << "\n";
      return report.pass ? kExitOk : kExitCertificate;
    }

    if (*passive) {
      Overrides o;
      if (t_final > 0.0) o.emplace_back("sim.t_final", std::to_string(t_final));
      const Scenario s = load_scenario(scenario_path, o);
      RunOptions opts;
      opts.passive = true;
      const RunResult r = run(s, opts);
      std::cout << summary_json(r.summary).dump(2) << "\n";
      return r.summary.aborted ? kExitNumerical : kExitOk;
    }

    if (*sweep) {
      std::vector<SweepAxis> axes;
      for (const std::string& p : params) axes.push_back(parse_axis(p));
      const std::vector<Overrides> grid = cartesian(axes);
      // Validate every grid point up front so a bad value fails before any run.
      for (const Overrides& o : grid) load_scenario(scenario_path, o);

      std::vector<SweepOutcome> outcomes(grid.size());
      std::vector<fs::path> dirs(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "run_%04zu", k);
        dirs[k] = fs::path(out_dir) / name;
      }
      const auto count = static_cast<long>(grid.size());
      if (serial) {
        for (long k = 0; k < count; ++k) outcomes[k] = sweep_one(scenario_path, grid[k], dirs[k]);
      } else {
#pragma omp parallel for schedule(dynamic)
        for (long k = 0; k < count; ++k) outcomes[k] = sweep_one(scenario_path, grid[k], dirs[k]);
      }

      fs::create_directories(out_dir);
      nlohmann::json index = nlohmann::json::array();
      int status = kExitOk;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        nlohmann::json entry;
        entry["dir"] = dirs[k].filename().string();
        for (const auto& [key, value] : grid[k]) entry["params"][key] = value;
        entry["status"] = outcomes[k].status;
        if (!outcomes[k].message.empty()) entry["message"] = outcomes[k].message;
        if (outcomes[k].status != kExitInput) entry["summary"] = summary_json(outcomes[k].summary);
        index.push_back(entry);
        status = std::max(status, outcomes[k].status);
      }
      std::ofstream f(fs::path(out_dir) / "index.json");
      if (!f) throw Error(Errc::io_error, "cannot write index.json");
      f << index.dump(2) << "\n";
      std::cout << "sweep: " << grid.size() << " runs, index at "
                << (fs::path(out_dir) / "index.json").string() << "\n";
      return status;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
