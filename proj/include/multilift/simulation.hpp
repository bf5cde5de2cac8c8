#pragma once

// Closed-loop simulation of a scenario and its telemetry outputs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "multilift/dynamics.hpp"
#include "multilift/scenario.hpp"

namespace multilift {

struct TelemetryFlags {
  bool domain_exit = false;
  bool negative_thrust = false;
  bool degenerate_tension = false;
};

struct TelemetryRecord {
  double t = 0.0;
  Vec3 x0 = Vec3::Zero();
  Vec3 e_x = Vec3::Zero();
  /// 1/2 |R0 - R0d|_F^2
  double psi0 = 0.0;
  /// 1/2 |q_i - q_id|^2
  std::vector<double> psi_q;
  /// 1/2 |R_i - R_ic|_F^2 (zero for the simplified model)
  std::vector<double> psi_R;
  /// T_i = -mu_i . q_i
  std::vector<double> tension;
  std::vector<double> thrust;
  std::vector<Vec3> moment;
  double energy = 0.0;
  TelemetryFlags flags;
  /// Full state, kept for constraint audits and path export.
  SystemState state;
};

struct RunSummary {
  bool aborted = false;
  std::string abort_reason;
  std::size_t steps = 0;
  double final_e_x = 0.0;
  double final_psi0 = 0.0;
  double final_psi_q = 0.0;
  double max_tension = 0.0;
  double min_thrust = 0.0;
  bool any_domain_exit = false;
  bool any_negative_thrust = false;
  bool any_degenerate_tension = false;
  /// Per-agent thrust commands applied as zero under sim.clamp_thrust.
  std::size_t thrust_clamp_events = 0;
  /// Filled for passive runs.
  std::optional<double> energy_drift;
  std::optional<double> horizontal_momentum_drift;
};

struct RunResult {
  std::vector<TelemetryRecord> telemetry;
  RunSummary summary;
};

struct RunOptions {
  /// Zero forces and moments throughout; the controller is not constructed.
  bool passive = false;
};

/// Integrates the scenario from t = 0 to t_final. A non-finite state ends the
/// run early with the telemetry gathered so far and summary.aborted set.
/// Construction errors of the controller (for example a rank-deficient
/// attachment geometry) propagate as exceptions.
RunResult run(const Scenario& scenario, const RunOptions& options = {});

/// Fixed CSV column set; version 1.
std::string csv_header(std::size_t n);
void write_csv(const std::vector<TelemetryRecord>& telemetry, const std::filesystem::path& path);

/// Tracking-error and input panels: e_x0, Psi_0, Psi_q, Psi_R, tension, thrust
/// and moment. Returns the paths written.
std::vector<std::filesystem::path> write_svg_panels(const std::vector<TelemetryRecord>& telemetry,
                                                    const std::filesystem::path& dir);

/// Payload and quadrotor trajectories as whitespace-separated polylines
/// (t, x, y, z per line, one block per body).
void write_paths(const std::vector<TelemetryRecord>& telemetry, const SystemParams& params,
                 const std::filesystem::path& path);

/// Writes telemetry.csv and, per the scenario output options, the SVG panels
/// and paths.txt into `dir`. Throws Errc::precondition on empty telemetry and
/// Errc::io_error on write failures.
void emit_outputs(const std::vector<TelemetryRecord>& telemetry, const Scenario& scenario,
                  const std::filesystem::path& dir);

}  // namespace multilift
