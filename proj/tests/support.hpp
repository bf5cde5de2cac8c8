#pragma once

#include <filesystem>
#include <random>

#include "multilift/scenario.hpp"

namespace multilift::testing {

inline std::filesystem::path scenario_dir() { return MULTILIFT_SCENARIO_DIR; }

inline Scenario fig8() { return load_scenario(scenario_dir() / "fig8_paper.toml"); }

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

/// A state on the constraint manifold with random attitudes, links and rates.
inline SystemState random_state(const SystemParams& params, std::mt19937_64& rng) {
  SystemState s;
  s.x0 = random_vec(rng, 2.0);
  s.v0 = random_vec(rng);
  s.R0 = expm(random_vec(rng, 1.0));
  s.Omega0 = random_vec(rng);
  for (std::size_t i = 0; i < params.n(); ++i) {
    AgentState a;
    a.q = (kE3 + 0.5 * random_vec(rng)).normalized();
    const Vec3 w = random_vec(rng);
    a.omega = w - a.q.dot(w) * a.q;
    a.R = expm(random_vec(rng, 0.5));
    a.Omega = random_vec(rng);
    s.agents.push_back(a);
  }
  return s;
}

}  // namespace multilift::testing
