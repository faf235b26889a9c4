#pragma once

#include "klab/model.hpp"

namespace klab {

struct AubinValues {
  double I = 0.0;
  double J = 0.0;
  double I_minus_J = 0.0;
};

struct FunctionalReport {
  double I = 0.0;
  double J = 0.0;
  double I_minus_J = 0.0;
  double AM = 0.0;
  double entropy_ref = 0.0;    // Ent(e^{f_omega} omega^n, omega_phi^n)
  double entropy_plain = 0.0;  // Ent(omega^n, omega_phi^n)
  double E_fano = 0.0;         // entropy_ref - mu*(I-J)
  double E_csc = 0.0;          // entropy_plain + n*mu*AM - V^{-1}Int phi Ric omega
};

/// I, J and their difference by the mixed-wedge quadratures (n = 1: the
/// mixed powers reduce to omega^n and omega_phi^n).
AubinValues aubin(const Potential& phi);

/// Aubin-Mabuchi functional, (1/((n+1)V)) sum_j Int phi omega^j omega_phi^{n-j}.
double am(const Potential& phi);

/// Ent(nu, chi) = V^{-1} Int log(chi/nu) chi, with the 0*log 0 = 0
/// convention at chi = 0 nodes. Rejects mismatched totals beyond 1e-6*V.
double entropy(const DensityField& nu, const DensityField& chi);

/// Full functional report; E_fano computed via the entropy form, with the
/// identity-equivalent forms exposed for testing.
FunctionalReport mabuchi(const Potential& phi);

/// J of the base metric measured from omega_phi's viewpoint:
/// j_relative(base, phi) = J(omega_phi, omega_base) in the pair notation,
/// so that (I-J)(0 -> phi) = j_relative(phi, 0).
double j_relative(const Potential& base, const Potential& phi);

/// (I, J, I-J) of the pair (omega_base -> omega_target); reduces to aubin()
/// when base = 0. Used by the orbit-functional F_eta and by j_relative.
AubinValues aubin_relative(const Potential& base, const Potential& target);

}  // namespace klab
