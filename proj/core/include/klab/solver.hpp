#pragma once

#include <string>
#include <vector>

#include "klab/model.hpp"

namespace klab {

struct ParamPoint {
  double s = 0.0;
  double t = 0.0;
};

/// Parameter set A = (-inf,0] x [0,1]  union  [0,mu] x {1}.
bool in_parameter_set(const ModelGeometry& m, const ParamPoint& p);

/// c_t = -log( V^{-1} Int e^{t f_omega} omega^n ), cached per call.
double c_of_t(const ModelGeometry& m, double t);

struct SolveOptions {
  double tol = 1e-10;        // sup-norm residual target
  int max_iter = 60;
  int max_backtrack = 30;
  bool mean_normalize = false;  // project onto Int phi omega_phi^n = 0
  const Vec* deflate = nullptr; // direction pinned out of the Newton step
                                // (terminal s = mu node of the continuity run)
};

struct NodeResult {
  Potential phi;
  int iters = 0;
  double residual = 0.0;
  std::vector<double> residual_history;  // sup-norms, one entry per iterate
};

/// Damped Newton for  log(ma_density(phi)) + s*phi = b.
/// Throws NonConvergence / PositivityLoss / NormalizationAmbiguity
/// (the latter when s = 0 and no normalization was requested).
NodeResult solve_ma_equation(const Model& m, double s, const Vec& b,
                             const Potential& init, const SolveOptions& opts);

/// One continuity-method node:  log(density) - t*f_omega - c_t + s*phi = 0.
/// s = 0 automatically applies the mean normalization.
NodeResult solve_node(const Model& m, double s, double t,
                      const Potential& init, double tol = 1e-10);

struct NodeDiagnostics {
  int iters = 0;
  double residual = 0.0;
  double max_abs_phi = 0.0;
  double osc = 0.0;
  double lambda1 = 0.0;
  double min_density = 0.0;
  double max_density = 0.0;
  double E = 0.0;
};

struct TraceNode {
  ParamPoint p;
  Potential phi;
  NodeDiagnostics diag;
};

struct ContinuityTrace {
  std::vector<TraceNode> nodes;
  bool completed = false;
  std::string failure;  // empty when completed
};

/// Default three-stage schedule: geometric s-ladder -64 .. -1/64 at t = 0,
/// t-ladder 0 -> 1 at s = -1/64, then s: 0 -> mu in mu/32 steps at t = 1
/// (the last stage is skipped when mu <= 0).
std::vector<ParamPoint> default_schedule(const ModelGeometry& m);

/// Warm-started traversal of the schedule with automatic bisection on
/// failed steps (depth cap 8). Returns a partial trace with completed =
/// false instead of throwing when bisection bottoms out.
ContinuityTrace continuity_run(const Model& m,
                               const std::vector<ParamPoint>& schedule,
                               double tol = 1e-10);

struct SpectralGap {
  double lambda1 = 0.0;
  Vec eigenfield;  // sup-normalized
  int iters = 0;
};

/// Smallest positive eigenvalue of -Lap_{omega_base} on mean-zero fields
/// (bordered inverse iteration, tolerance 1e-8 relative on lambda).
/// The s argument is carried for reporting the Poincare margin lambda1 - s.
SpectralGap spectral_gap(const Potential& base, double s = 0.0);

struct AprioriRow {
  double s = 0.0, t = 0.0;
  double osc = 0.0;
  double max_abs_phi = 0.0;
  double negc0_bound = 0.0;  // closed-form sup bound for s < 0, NaN otherwise
  double sup_slack = 0.0;    // bound - max phi (s < 0 rows)
  double lambda1 = 0.0;
  double gap_margin = 0.0;   // lambda1 - s, NaN when not at (s,1), s < mu
  double E = 0.0;
  double lap_ratio = 0.0;    // (n + max Lap phi) / exp(c_lap * osc)
};

struct AprioriReport {
  std::vector<AprioriRow> rows;
  double C_sup = 0.0;   // frozen sup-bound constant for max phi <= C(1+1/s)
  double c_lap = 0.0;   // fitted exponent of the Laplacian bound
  std::vector<std::string> violations;  // empty on a clean run
};

AprioriReport apriori_report(const ContinuityTrace& trace);

}  // namespace klab
