#pragma once

#include <string>
#include <vector>

#include "klab/model.hpp"

namespace klab {

/// Per-state flow diagnostics (state k lives at times[k]).
struct FlowStateDiag {
  double time = 0.0;
  double E = 0.0;
  double calabi_speed = 0.0;   // ||s - n*mu||_{L2(omega_phi)}
  double mabuchi_speed = 0.0;  // ||f_{omega_phi}||_{L2(omega_phi)}
  double darvas_speed = 0.0;   // V^{-1} ||f_{omega_phi}||_{L1(omega_phi)}
};

/// Per-step increments (step k joins states k and k+1).
struct FlowStepDiag {
  double dens_l1_increment = 0.0;  // V^{-1} Int |g_{k+1} - g_k| omega^n
  double sup_change = 0.0;
};

struct FlowTrajectory {
  Model model;
  std::vector<double> times;   // stored-state times (stride-subsampled)
  std::vector<Vec> potentials; // stored states, always includes first & last
  std::vector<FlowStateDiag> states;  // every state, not subsampled
  std::vector<FlowStepDiag> steps;    // every step
  double phi0_constant = 0.0;
  bool completed = false;
  std::string failure;
};

struct FlowOptions {
  double tol = 1e-10;        // per-step implicit solve residual
  double phi0_constant = 0.0;
  int store_stride = 1;      // keep every k-th potential
  int max_halvings = 20;     // per-step dt halving cap on rejected steps
};

/// Implicit-Euler integration of  d(phi)/dt = log(density) - f_omega + mu*phi,
/// each step a Newton node with zeroth-order coefficient mu - 1/dt. For
/// mu != 0 the additive constant is renormalized every step so that
/// Int e^{f_omega - mu*phi} omega^n = V, which keeps f_{omega_phi} = -phidot.
FlowTrajectory krf_run(const Model& m, const Potential& phi0, double T,
                       double dt, const FlowOptions& opts = {});

/// Wrap an explicit list of potentials (e.g. a manufactured path) in the
/// trajectory bookkeeping; diagnostics recomputed from the states.
FlowTrajectory trajectory_from_potentials(const Model& m,
                                          const std::vector<double>& times,
                                          const std::vector<Vec>& potentials);

struct FlowLengths {
  double calabi_len = 0.0;
  double darvas_len = 0.0;
  double mabuchi_len = 0.0;
};

/// Time-trapezoid sums of the closed-form speed integrands.
FlowLengths flow_lengths(const FlowTrajectory& traj);

struct VerdictOptions {
  double t_min = -1.0;          // < 0: default 20/mu (20 when mu = 0)
  double dens_tail_tol = 1e-5;  // summed density-L1 increments over [T/2, T]
  double sup_tail_tol = 1e-4;   // sup |phi(T) - phi(T/2)|
};

struct Verdict {
  bool converged = false;
  bool inconclusive = false;
  FlowLengths lengths;        // f-based lengths
  double darvas_path_len = 0.0;  // phidot-based length over stored states
  double dens_tail = 0.0;
  double sup_tail = 0.0;
  std::string evidence;
};

Verdict convergence_verdict(const FlowTrajectory& traj,
                            const VerdictOptions& opts = {});

}  // namespace klab
