#include <benchmark/benchmark.h>

#include "klab/flow.hpp"
#include "klab/functionals.hpp"
#include "klab/metric.hpp"
#include "klab/solver.hpp"

using namespace klab;

namespace {

void BM_MaDensityTorus(benchmark::State& state) {
  auto m = make_model(ModelKind::Torus2, static_cast<int>(state.range(0)));
  Rng rng(1);
  Potential phi = random_admissible(m, rng, 0.2);
  for (auto _ : state) {
    DensityField d = ma_density(phi);
    benchmark::DoNotOptimize(d.min_density);
  }
}
BENCHMARK(BM_MaDensityTorus)->Arg(64)->Arg(128)->Arg(256);

void BM_MabuchiReport(benchmark::State& state) {
  auto m = make_model(ModelKind::P1Symmetric,
                      static_cast<int>(state.range(0)), 16.0);
  Rng rng(2);
  Potential phi = random_admissible(m, rng, 0.3);
  for (auto _ : state) {
    FunctionalReport r = mabuchi(phi);
    benchmark::DoNotOptimize(r.E_fano);
  }
}
BENCHMARK(BM_MabuchiReport)->Arg(512)->Arg(2048)->Arg(8192);

void BM_NewtonSolveTorus(benchmark::State& state) {
  auto m0 = make_model(ModelKind::Torus2, static_cast<int>(state.range(0)));
  Vec F(m0->nodes());
  for (int i = 0; i < m0->N; ++i)
    for (int j = 0; j < m0->N; ++j)
      F[m0->idx(i, j)] = 0.3 * std::sin(2 * 3.14159265358979 * i / m0->N);
  Model ms = with_synthetic_f(m0, F);
  for (auto _ : state) {
    NodeResult nr = solve_node(ms, 0.0, 1.0,
                               Potential(ms, Vec::Zero(ms->nodes())), 1e-10);
    benchmark::DoNotOptimize(nr.residual);
  }
}
BENCHMARK(BM_NewtonSolveTorus)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_D1Sphere(benchmark::State& state) {
  auto m = make_model(ModelKind::P1Symmetric,
                      static_cast<int>(state.range(0)), 16.0);
  Rng rng(3);
  Potential u = random_admissible(m, rng, 0.3);
  Potential v = random_admissible(m, rng, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(d1_pythagorean(u, v));
  }
}
BENCHMARK(BM_D1Sphere)->Arg(256)->Arg(1024);

void BM_FlowStep(benchmark::State& state) {
  auto m = make_model(ModelKind::Torus2, 32);
  Rng rng(4);
  Potential p0 = random_admissible(m, rng, 0.05, 0.3);
  for (auto _ : state) {
    FlowTrajectory traj = krf_run(m, p0, 0.5, 0.05);
    benchmark::DoNotOptimize(traj.completed);
  }
}
BENCHMARK(BM_FlowStep)->Unit(benchmark::kMillisecond);

void BM_GeodesicSphere(benchmark::State& state) {
  auto m = make_model(ModelKind::P1Symmetric,
                      static_cast<int>(state.range(0)), 16.0);
  Rng rng(5);
  Potential u = random_admissible(m, rng, 0.25, 0.4);
  Potential v = random_admissible(m, rng, 0.25, 0.4);
  for (auto _ : state) {
    PathRecord path = geodesic(u, v, 32);
    benchmark::DoNotOptimize(path.times.size());
  }
}
BENCHMARK(BM_GeodesicSphere)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
