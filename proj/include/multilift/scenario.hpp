#pragma once

// Scenario files: a TOML (or JSON) description of the vehicle, the initial
// state, the payload command, gains and simulation options.
//
// Schema version 1:
//
//   schema_version = 1
//   name = "..."
//   [world]      gravity
//   [payload]    mass, box = [length, width, height] | inertia (3 or 3x3)
//   [[agents]]   mass, inertia, link_length, attachment, q, omega, R, Omega,
//                heading (polynomial coefficients of b1(t), lowest order first)
//   [initial]    x0, v0, R0, Omega0
//   [command]    attitude = "tangent" | "constant" | "explicit_rate",
//                reference (3x3), rate, and x/y/z = { offset, terms = [...] }
//   [gains]      k_x0 k_v0 k_R0 k_Omega0 k_q k_omega k_R k_Omega epsilon
//   [sim]        dt, t_final, control_divisor, log_interval, model, seed,
//                clamp_thrust
//   [domain]     e_x_max, psi_R0, psi_q
//   [output]     svg, path
//
// Every key is optional except payload.mass and the agents; unknown keys are
// rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "multilift/certifier.hpp"
#include "multilift/command.hpp"
#include "multilift/dynamics.hpp"
#include "multilift/payload_controller.hpp"

namespace multilift {

inline constexpr int kScenarioSchemaVersion = 1;

enum class Model { simplified, full };

struct SimOptions {
  double dt = 1e-3;
  double t_final = 10.0;
  /// Controller runs every `control_divisor` integration steps.
  int control_divisor = 1;
  double log_interval = 0.01;
  Model model = Model::full;
  std::uint64_t seed = 0;
  /// Full model only: negative thrust commands are applied as zero.
  bool clamp_thrust = false;
};

/// b1(t) = normalize(sum_k c_k t^k).
struct HeadingPolynomial {
  std::vector<Vec3> coefficients{kE1};

  Vec3 at(double t) const;
};

struct OutputOptions {
  bool svg = true;
  bool path = true;
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string name = "scenario";
  SystemParams params;
  /// When set, the payload inertia was derived from these box dimensions.
  std::optional<Vec3> payload_box;
  SystemState initial;
  CommandSpec command;
  std::vector<HeadingPolynomial> headings;
  GainSet gains;
  SimOptions sim;
  ErrorDomain domain;
  OutputOptions output;

  /// Throws Errc::validation_error naming the first violated invariant.
  void validate() const;
};

/// Uniform-density rectangular box: diag(m (w^2+h^2)/12, m (l^2+h^2)/12, m (l^2+w^2)/12).
Mat3 box_inertia(double mass, const Vec3& dims);

/// Parses TOML, or JSON when the extension is `.json`. Throws Errc::parse_error
/// (with line and key information where available), Errc::validation_error or
/// Errc::io_error.
Scenario load_scenario(const std::filesystem::path& path);

/// Same as load_scenario after replacing values at dotted key paths, e.g.
/// {"gains.k_x0", "12"} or {"agents.0.mass", "0.8"}. Values are TOML literals.
Scenario load_scenario(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

Scenario parse_scenario(const std::string& text, bool json = false);
std::string serialize_scenario(const Scenario& scenario);

/// Checks det R_d = +1 and orthonormality of the commanded payload attitude on
/// a grid over [0, t_final]. Throws Errc::validation_error.
void check_command(const CommandSpec& spec, double t_final, double step = 0.01);

}  // namespace multilift
