#include "klab/functionals.hpp"

#include <cmath>
#include <limits>

namespace klab {

AubinValues aubin(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  DensityField d = ma_density(phi);
  const Vec& u = phi.samples;
  AubinValues out;
  out.I = (m.w.dot(u) - integral_phi(m, d.g, u)) / m.volume;
  // J = V^{-1} Int phi omega^n - (1/((n+1)V)) Int phi (omega^n + omega_phi^n)
  out.J = m.w.dot(u) / m.volume -
          0.5 * (m.w.dot(u) + integral_phi(m, d.g, u)) / m.volume;
  out.I_minus_J = out.I - out.J;
  return out;
}

AubinValues aubin_relative(const Potential& base, const Potential& target) {
  require_same_model(base, target);
  const ModelGeometry& m = *base.model;
  Vec gb = ma_density(base).g;
  Vec gt = ma_density(target).g;
  Vec u = target.samples - base.samples;
  AubinValues out;
  out.I = (integral_phi(m, gb, u) - integral_phi(m, gt, u)) / m.volume;
  out.J = integral_phi(m, gb, u) / m.volume -
          0.5 * (integral_phi(m, gb, u) + integral_phi(m, gt, u)) / m.volume;
  out.I_minus_J = out.I - out.J;
  return out;
}

double am(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  Vec g = ma_density(phi).g;
  return 0.5 * (m.w.dot(phi.samples) + integral_phi(m, g, phi.samples)) /
         m.volume;
}

double entropy(const DensityField& nu, const DensityField& chi) {
  if (nu.model != chi.model)
    throw ModelMismatch("entropy: density fields on different models");
  const ModelGeometry& m = *nu.model;
  double tn = integral_ref(m, nu.g);
  double tc = integral_ref(m, chi.g);
  if (std::abs(tn - tc) > 1e-6 * m.volume ||
      std::abs(tn - m.volume) > 1e-6 * m.volume)
    throw Error("entropy: measures must both integrate to V");
  if (chi.g.minCoeff() < 0.0)
    throw Error("entropy: chi must be nonnegative");
  double acc = 0.0;
  for (int i = 0; i < m.nodes(); ++i) {
    double c = chi.g[i];
    if (c <= 0.0) continue;  // x log x -> 0
    double n = nu.g[i];
    if (n <= 0.0) return std::numeric_limits<double>::infinity();
    acc += m.w[i] * c * std::log(c / n);
  }
  return acc / m.volume;
}

FunctionalReport mabuchi(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  DensityField d = ma_density(phi);
  if (!d.admissible)
    throw PositivityLoss("mabuchi: potential not admissible");
  FunctionalReport r;
  AubinValues ij = aubin(phi);
  r.I = ij.I;
  r.J = ij.J;
  r.I_minus_J = ij.I_minus_J;
  r.AM = am(phi);

  // Entropies, written directly in terms of the density.
  double ent_ref = 0.0, ent_plain = 0.0;
  for (int i = 0; i < m.nodes(); ++i) {
    double g = d.g[i];
    if (g <= 0.0) continue;
    double lg = std::log(g);
    ent_plain += m.w[i] * g * lg;
    ent_ref += m.w[i] * g * (lg - m.f_omega[i]);
  }
  r.entropy_plain = ent_plain / m.volume;
  r.entropy_ref = ent_ref / m.volume;

  r.E_fano = r.entropy_ref - m.mu * r.AM +
             m.mu * mean_phi(m, d.g, phi.samples);

  // csc form with s0 = n*mu and Ric omega = mu*omega + i ddbar f_omega.
  double ric_term =
      (m.mu * m.w.dot(phi.samples) + phi.samples.dot(m.K * m.f_omega)) /
      m.volume;
  r.E_csc = r.entropy_plain + m.mu * r.AM - ric_term;
  return r;
}

double j_relative(const Potential& base, const Potential& phi) {
  return aubin_relative(base, phi).J;
}

}  // namespace klab
