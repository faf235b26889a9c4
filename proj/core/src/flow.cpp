#include "klab/flow.hpp"

#include <cmath>
#include <sstream>

#include "klab/functionals.hpp"
#include "klab/solver.hpp"

namespace klab {

namespace {

FlowStateDiag state_diag(const Model& model, const Vec& phi, double time) {
  const ModelGeometry& m = *model;
  Potential p(model, phi);
  DensityField d = ma_density(p);
  Vec f = ricci_potential_of(p);
  Vec lap_f = laplacian_at(m, d, f);  // = s_{omega_phi} - n*mu exactly
  FlowStateDiag out;
  out.time = time;
  out.E = mabuchi(p).E_fano;
  out.calabi_speed = std::sqrt(integral_phi(m, d.g, lap_f.cwiseAbs2()));
  out.mabuchi_speed = std::sqrt(integral_phi(m, d.g, f.cwiseAbs2()));
  out.darvas_speed = integral_phi(m, d.g, f.cwiseAbs()) / m.volume;
  return out;
}

FlowStepDiag step_diag(const ModelGeometry& m, const Vec& pa, const Vec& pb) {
  Vec ga = Vec::Ones(m.nodes()) + (m.K * pa).cwiseQuotient(m.w);
  Vec gb = Vec::Ones(m.nodes()) + (m.K * pb).cwiseQuotient(m.w);
  FlowStepDiag out;
  out.dens_l1_increment = integral_ref(m, (gb - ga).cwiseAbs()) / m.volume;
  out.sup_change = (pb - pa).cwiseAbs().maxCoeff();
  return out;
}

double renorm_constant(const ModelGeometry& m, const Vec& phi) {
  Vec e = m.f_omega - m.mu * phi;
  double mx = e.maxCoeff();
  return mx + std::log((e.array() - mx).exp().matrix().dot(m.w) / m.volume);
}

}  // namespace

FlowTrajectory krf_run(const Model& model, const Potential& phi0, double T,
                       double dt, const FlowOptions& opts) {
  const ModelGeometry& m = *model;
  if (dt <= 0.0 || dt > 0.5)
    throw Error("krf_run: dt outside the stability window (0, 0.5]");
  if (T <= 0.0) throw Error("krf_run: nonpositive horizon");

  FlowTrajectory traj;
  traj.model = model;
  traj.phi0_constant = opts.phi0_constant;

  Vec phi = phi0.samples.array() + opts.phi0_constant;
  if (m.mu != 0.0) phi.array() += renorm_constant(m, phi) / m.mu;
  if (!ma_density(Potential(model, phi)).admissible)
    throw PositivityLoss("krf_run: initial potential not admissible");

  double time = 0.0;
  int step_index = 0;
  traj.times.push_back(time);
  traj.potentials.push_back(phi);
  traj.states.push_back(state_diag(model, phi, time));

  while (time < T - 1e-12) {
    double step = std::min(dt, T - time);
    Vec next;
    bool done = false;
    int halvings = 0;
    while (!done) {
      try {
        double s_eff = m.mu - 1.0 / step;
        Vec b = m.f_omega - phi / step;
        SolveOptions so;
        so.tol = opts.tol;
        NodeResult nr =
            solve_ma_equation(model, s_eff, b, Potential(model, phi), so);
        next = nr.phi.samples;
        done = true;
      } catch (const Error&) {
        if (++halvings > opts.max_halvings) {
          traj.completed = false;
          traj.failure = "StepRejected: dt-halving cap reached at t = " +
                         std::to_string(time);
          return traj;
        }
        step *= 0.5;
      }
    }
    if (m.mu != 0.0) next.array() += renorm_constant(m, next) / m.mu;

    traj.steps.push_back(step_diag(m, phi, next));
    phi = std::move(next);
    time += step;
    ++step_index;
    traj.states.push_back(state_diag(model, phi, time));
    if (step_index % opts.store_stride == 0 || time >= T - 1e-12) {
      traj.times.push_back(time);
      traj.potentials.push_back(phi);
    }
  }
  traj.completed = true;
  return traj;
}

FlowTrajectory trajectory_from_potentials(const Model& model,
                                          const std::vector<double>& times,
                                          const std::vector<Vec>& potentials) {
  if (times.size() != potentials.size() || times.size() < 2)
    throw Error("trajectory_from_potentials: need >= 2 timestamped states");
  FlowTrajectory traj;
  traj.model = model;
  traj.times = times;
  traj.potentials = potentials;
  for (size_t k = 0; k < times.size(); ++k)
    traj.states.push_back(state_diag(model, potentials[k], times[k]));
  for (size_t k = 0; k + 1 < times.size(); ++k)
    traj.steps.push_back(step_diag(*model, potentials[k], potentials[k + 1]));
  traj.completed = true;
  return traj;
}

FlowLengths flow_lengths(const FlowTrajectory& traj) {
  if (traj.states.size() < 2)
    throw Error("flow_lengths: trajectory with fewer than 2 states");
  FlowLengths out;
  for (size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const auto& a = traj.states[k];
    const auto& b = traj.states[k + 1];
    double dt = b.time - a.time;
    out.calabi_len += 0.5 * dt * (a.calabi_speed + b.calabi_speed);
    out.darvas_len += 0.5 * dt * (a.darvas_speed + b.darvas_speed);
    out.mabuchi_len += 0.5 * dt * (a.mabuchi_speed + b.mabuchi_speed);
  }
  return out;
}

Verdict convergence_verdict(const FlowTrajectory& traj,
                            const VerdictOptions& opts) {
  const ModelGeometry& m = *traj.model;
  Verdict v;
  v.lengths = flow_lengths(traj);

  // phidot-based Darvas length over the stored states (midpoint speeds);
  // distinguishes genuine flows from manufactured escape paths, whose
  // Ricci potentials can vanish identically.
  for (size_t k = 0; k + 1 < traj.potentials.size(); ++k) {
    double dt = traj.times[k + 1] - traj.times[k];
    if (dt <= 0.0) continue;
    Vec dot = (traj.potentials[k + 1] - traj.potentials[k]) / dt;
    Vec mid = 0.5 * (traj.potentials[k] + traj.potentials[k + 1]);
    Vec g = Vec::Ones(m.nodes()) + (m.K * mid).cwiseQuotient(m.w);
    v.darvas_path_len += dt * integral_phi(m, g, dot.cwiseAbs()) / m.volume;
  }

  double T = traj.states.back().time;
  double t_min = opts.t_min > 0.0
                     ? opts.t_min
                     : (m.mu > 0.0 ? 20.0 / m.mu : 20.0);
  if (T < t_min || !traj.completed) {
    v.inconclusive = true;
    v.evidence = "Inconclusive: duration " + std::to_string(T) +
                 " below T_min = " + std::to_string(t_min) +
                 (traj.failure.empty() ? "" : "; " + traj.failure);
    return v;
  }

  // Tail Cauchy checks over [T/2, T].
  double half = 0.5 * T;
  double acc = 0.0;
  for (size_t k = 0; k + 1 < traj.states.size(); ++k)
    if (traj.states[k].time >= half) acc += traj.steps[k].dens_l1_increment;
  v.dens_tail = acc;

  const Vec* phi_half = nullptr;
  for (size_t k = 0; k < traj.potentials.size(); ++k)
    if (traj.times[k] >= half) {
      phi_half = &traj.potentials[k];
      break;
    }
  v.sup_tail = phi_half
                   ? (traj.potentials.back() - *phi_half).cwiseAbs().maxCoeff()
                   : 0.0;

  v.converged =
      v.dens_tail < opts.dens_tail_tol && v.sup_tail < opts.sup_tail_tol;
  std::ostringstream ev;
  ev << (v.converged ? "converged" : "not converged")
     << ": dens_tail = " << v.dens_tail << " (tol " << opts.dens_tail_tol
     << "), sup_tail = " << v.sup_tail << " (tol " << opts.sup_tail_tol
     << "), lengths (C, D, M) = (" << v.lengths.calabi_len << ", "
     << v.lengths.darvas_len << ", " << v.lengths.mabuchi_len
     << "), darvas path length = " << v.darvas_path_len;
  v.evidence = ev.str();
  return v;
}

}  // namespace klab
