#include <cmath>

#include "doctest.h"
#include "klab/flow.hpp"
#include "klab/metric.hpp"
#include "klab/solver.hpp"

using namespace klab;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("KE point is stationary under the flow") {
  auto m = make_model(ModelKind::P1Symmetric, 128, 16.0);
  FlowTrajectory traj =
      krf_run(m, Potential(m, Vec::Zero(m->nodes())), 1.0, 0.05);
  REQUIRE(traj.completed);
  Vec drift = traj.potentials.back() - traj.potentials.front();
  CHECK(drift.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("torus flow converges to the calabi-yau solution") {
  auto m0 = make_model(ModelKind::Torus2, 32);
  const ModelGeometry& m = *m0;
  Vec F(m.nodes());
  for (int i = 0; i < m.N; ++i)
    for (int j = 0; j < m.N; ++j)
      F[m.idx(i, j)] = 0.3 * std::sin(2 * kPi * i / m.N) +
                       0.2 * std::cos(2 * kPi * j / m.N);
  auto ms = with_synthetic_f(m0, F);

  NodeResult cy =
      solve_node(ms, 0.0, 1.0, Potential(ms, Vec::Zero(m.nodes())), 1e-10);
  Rng rng(19);
  Potential start = random_admissible(ms, rng, 0.05, 0.3);
  FlowTrajectory traj = krf_run(ms, start, 30.0, 0.05);
  REQUIRE(traj.completed);
  // Cross-module oracle: terminal density matches the elliptic solve in
  // the density-L1 sense.
  Vec g_flow = ma_density(Potential(ms, traj.potentials.back())).g;
  Vec g_cy = ma_density(cy.phi).g;
  double l1 = integral_ref(m, (g_flow - g_cy).cwiseAbs()) / m.volume;
  CHECK(l1 <= 1e-5);

  Verdict v = convergence_verdict(traj, {20.0, 1e-5, 1e-4});
  CHECK(v.converged);
  CHECK(!v.inconclusive);
  CHECK(v.lengths.calabi_len > 0.0);
  CHECK(std::isfinite(v.lengths.calabi_len));
  CHECK(std::isfinite(v.lengths.darvas_len));
  CHECK(std::isfinite(v.lengths.mabuchi_len));
}

TEST_CASE("per-step speeds match the closed-form integrands") {
  auto m = make_model(ModelKind::Torus2, 32);
  Rng rng(4);
  Potential p0 = random_admissible(m, rng, 0.05, 0.3);
  FlowOptions opts;
  opts.store_stride = 1;
  FlowTrajectory traj = krf_run(m, p0, 2.0, 0.005, opts);
  REQUIRE(traj.completed);
  PathRecord path = path_from_potentials(m, traj.times, traj.potentials);
  // The implicit step satisfies phi_{k+1} - phi_k = dt * phidot(phi_{k+1});
  // compare the finite-difference speed against the right-endpoint
  // closed forms ||s - n mu|| and ||f||. Skip the initial transient
  // (t < 0.1), where the unresolved high modes make any one-sided
  // comparison O(1), and the converged tail, where both sides sit at the
  // solver noise floor.
  for (size_t k = 0; k + 1 < traj.times.size(); ++k) {
    if (traj.times[k] < 0.1) continue;
    const FlowStateDiag& s = traj.states[k + 1];
    if (s.calabi_speed > 1e-6)
      CHECK(std::abs(path.calabi_speed[k] - s.calabi_speed) <=
            0.01 * s.calabi_speed);
    if (s.mabuchi_speed > 1e-6)
      CHECK(std::abs(path.mabuchi_speed[k] - s.mabuchi_speed) <=
            0.01 * s.mabuchi_speed);
    if (s.darvas_speed > 1e-6)
      CHECK(std::abs(path.darvas_speed[k] - s.darvas_speed) <=
            0.01 * s.darvas_speed);
  }
  // Length cross-check past the transient: piecewise sum of the
  // right-endpoint closed-form integrand vs the direct path length.
  double l_state = 0.0, l_path = 0.0;
  for (size_t k = 0; k + 1 < traj.times.size(); ++k) {
    if (traj.times[k] < 0.1) continue;
    double dt = traj.times[k + 1] - traj.times[k];
    l_state += dt * traj.states[k + 1].calabi_speed;
    l_path += dt * path.calabi_speed[k];
  }
  CHECK(std::abs(l_state - l_path) <= 0.01 * l_state);
}

TEST_CASE("trajectory_from_potentials recomputes diagnostics") {
  auto m = make_model(ModelKind::P1Symmetric, 128, 16.0);
  std::vector<double> times;
  std::vector<Vec> pots;
  for (int k = 0; k <= 10; ++k) {
    times.push_back(0.1 * k);
    pots.push_back(Vec::Constant(m->nodes(), 0.3 * k));
  }
  FlowTrajectory traj = trajectory_from_potentials(m, times, pots);
  // Constant-in-x states: zero Ricci potential, zero speeds.
  for (const FlowStateDiag& s : traj.states) {
    CHECK(std::abs(s.calabi_speed) < 1e-10);
    CHECK(std::abs(s.mabuchi_speed) < 1e-10);
  }
  FlowLengths fl = flow_lengths(traj);
  CHECK(fl.calabi_len == doctest::Approx(0.0).epsilon(1e-12));
}
