// Benchmarks: continuous solvers, one simulation, and the comparison grid with
// the serial runner against the OpenMP runner.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "persmon/experiment.hpp"
#include "persmon/rhcp.hpp"

using namespace persmon;

namespace {

ProblemConfig pc(std::uint64_t seed, double T) {
  GenerateOptions go;
  go.seed = seed;
  go.horizon_T = T;
  return generate_pc(go);
}

LocalState state_of(const ProblemConfig& cfg, TargetId j) {
  LocalState st;
  st.omega = {{0, cfg.omega0[0]}, {j, cfg.omega0[j]}};
  return st;
}

void BM_SolveRhcp2(benchmark::State& s) {
  const auto cfg = pc(1, 50.0);
  const auto& g = cfg.graph;
  const TargetId j = g.neighbors(0).front();
  const auto c = build_rhcp2(state_of(cfg, j), 0, j, g);
  const double u_max = 10.0 - g.rho(0, j);
  for (auto _ : s) benchmark::DoNotOptimize(solve_rhcp2(c, u_max));
}
BENCHMARK(BM_SolveRhcp2);

void BM_SolveRhcp1(benchmark::State& s) {
  const auto cfg = pc(1, 50.0);
  const auto& g = cfg.graph;
  const TargetId j = g.neighbors(0).front();
  const auto c = build_rhcp1(state_of(cfg, j), 0, j, g);
  const double budget = 10.0 - g.rho(0, j);
  for (auto _ : s) benchmark::DoNotOptimize(solve_rhcp1(c, budget));
}
BENCHMARK(BM_SolveRhcp1);

void BM_Simulate(benchmark::State& s, const char* name) {
  const auto cfg = pc(1, 50.0);
  RunSpec rs;
  rs.controller = name;
  for (auto _ : s) benchmark::DoNotOptimize(run_controller(cfg, rs).summary.J_T);
}
BENCHMARK_CAPTURE(BM_Simulate, rhc, "rhc")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Simulate, bdc, "bdc")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Simulate, mtsp, "mtsp")->Unit(benchmark::kMillisecond);

CompareSpec grid() {
  CompareSpec spec;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) spec.configs.push_back(pc(seed, 50.0));
  spec.controllers = {"rhc", "bdc", "mtsp", "rhc-p", "bdc-p"};
  spec.reps = 2;
  return spec;
}

void BM_CompareSerial(benchmark::State& s) {
  const auto spec = grid();
  for (auto _ : s) benchmark::DoNotOptimize(run_compare_serial(spec).failures);
}
BENCHMARK(BM_CompareSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_CompareParallel(benchmark::State& s) {
  const auto spec = grid();
  s.counters["threads"] = omp_get_max_threads();
  for (auto _ : s) benchmark::DoNotOptimize(run_compare_parallel(spec).failures);
}
BENCHMARK(BM_CompareParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
