// Serial reference against the OpenMP path for the three parallel kernels:
// the cross-constant grid search, batched accelerations and a sweep-style
// batch of closed-loop runs.

#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "multilift/certifier.hpp"
#include "multilift/dynamics.hpp"
#include "multilift/scenario.hpp"
#include "multilift/simulation.hpp"

using namespace multilift;

namespace {

const Scenario& fig8_scenario() {
  static const Scenario s = load_scenario(std::string(MULTILIFT_SCENARIO_DIR) + "/fig8_paper.toml");
  return s;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void BM_CrossConstantSearch(benchmark::State& state) {
  const Scenario& s = fig8_scenario();
  GainSet g;
  g.k_x0 = 16;
  g.k_v0 = 8;
  g.k_R0 = 40;
  g.k_Omega0 = 8;
  g.k_q = 1e6;
  g.k_omega = 2000;
  const ErrorDomain domain{0.02, 0.01, 1e-4};
  const CertificateConstants k = certificate_constants(s.params, 20.0);
  const CrossConstantSearch grid{1e-4, 10.0, static_cast<int>(state.range(1))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(search_cross_constants(s.params, g, domain, k, grid, exec_of(state)));
  }
}

std::vector<AccelerationSample> random_samples(const SystemParams& p, int count) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto vec = [&] { return Vec3(u(rng), u(rng), u(rng)); };
  std::vector<AccelerationSample> out;
  for (int k = 0; k < count; ++k) {
    AccelerationSample smp;
    smp.state.R0 = expm(vec());
    smp.state.Omega0 = vec();
    smp.state.v0 = vec();
    for (std::size_t i = 0; i < p.n(); ++i) {
      AgentState a;
      a.q = (kE3 + 0.5 * vec()).normalized();
      const Vec3 w = vec();
      a.omega = w - a.q.dot(w) * a.q;
      smp.state.agents.push_back(a);
      smp.u.push_back(5.0 * vec());
    }
    out.push_back(std::move(smp));
  }
  return out;
}

void BM_AccelerationsBatch(benchmark::State& state) {
  const SystemParams& p = fig8_scenario().params;
  const auto samples = random_samples(p, static_cast<int>(state.range(1)));
  const EquationForm form = state.range(2) == 0 ? EquationForm::matrix : EquationForm::eliminated;
  for (auto _ : state) {
    benchmark::DoNotOptimize(accelerations_batch(p, samples, form, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_SweepRuns(benchmark::State& state) {
  std::vector<Scenario> grid;
  for (double k_x0 : {4.0, 8.0, 12.0, 16.0}) {
    for (double k_q : {20.0, 40.0}) {
      Scenario s = fig8_scenario();
      s.sim.model = Model::simplified;
      s.sim.t_final = 1.0;
      s.output = {false, false};
      s.gains.k_x0 = k_x0;
      s.gains.k_q = k_q;
      grid.push_back(s);
    }
  }
  const long count = static_cast<long>(grid.size());
  std::vector<double> final_error(grid.size());
  for (auto _ : state) {
    if (exec_of(state) == Execution::serial) {
      for (long k = 0; k < count; ++k) final_error[k] = run(grid[k]).summary.final_e_x;
    } else {
#pragma omp parallel for schedule(dynamic)
      for (long k = 0; k < count; ++k) final_error[k] = run(grid[k]).summary.final_e_x;
    }
    benchmark::DoNotOptimize(final_error.data());
  }
}

}  // namespace

BENCHMARK(BM_CrossConstantSearch)
    ->ArgNames({"parallel", "points"})
    ->Args({0, 21})
    ->Args({1, 21})
    ->Args({0, 31})
    ->Args({1, 31})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AccelerationsBatch)
    ->ArgNames({"parallel", "samples", "eliminated"})
    ->ArgsProduct({{0, 1}, {4096}, {0, 1}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepRuns)->ArgNames({"parallel"})->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
