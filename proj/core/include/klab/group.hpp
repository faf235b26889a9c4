#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "klab/functionals.hpp"
#include "klab/model.hpp"
#include "klab/solver.hpp"

namespace klab {

// One-parameter group action on symmetric potentials of the sphere model.
// act(0, phi) == phi, and the pure group part act(a, 0) is normalized to
// have zero Aubin-Mabuchi energy.
Potential act(const Model& model, double a, const Vec& phi);
inline Potential act(const Potential& phi, double a) {
  return act(phi.model, a, phi.samples);
}

struct OrbitPoint {
  double a = 0.0;
  double F_eta = 0.0;  // translation-invariant part of the relative energy
  double E = 0.0;      // energy along the orbit
  double J = 0.0;      // exhaustion functional relative to the reference
  double am_const = 0.0;
};

struct OrbitScan {
  std::vector<OrbitPoint> points;
  double window = 0.0;  // scan half-width in the group parameter
};

OrbitScan orbit_scan(const Model& model, const Vec& eta,
                     const std::vector<double>& as);

// inf over the group orbit of J(act(a, phi)); golden-section search.
struct GroupInf {
  double value = 0.0;
  double argmin = 0.0;
  bool interior = false;  // false when the minimizer hit the search window
};
GroupInf jG(const Model& model, const Vec& phi, double window);
GroupInf d1G(const Potential& u, const Potential& v, double window);

// Derivative of the energy along the group direction at phi (centered
// difference in the group parameter).
double futaki_derivative(const Model& model, const Vec& phi, double eps = 1e-2);

// Remove the first-eigenspace component of v at the reference metric.
struct PerpProjection {
  Vec projected;
  double coefficient = 0.0;  // removed component in the eigenfield
  bool rescaled = false;     // true if admissibility required shrinking
};
PerpProjection perp_project(const Model& model, const Vec& v);

struct MTRow {
  double J = 0.0;
  double E = 0.0;
};

struct MTScan {
  std::vector<MTRow> rows;
  double slope = 0.0;   // least-squares slope C of E against J
  double offset = 0.0;  // D = max(C J - E) over the table
  std::vector<double> mechanism_residuals;  // group-criticality check
};

MTScan mt_scan(const Model& model, int n_rays, int n_steps, double step,
               Rng& rng, double mech_eps = 1e-2);

// Quadrature of int_{B_rho} exp(-psi) for a psi sampled on the M x M node
// grid of [-R, R]^2 (M odd so the center is a node).
double hormander_integral(const Eigen::MatrixXd& psi, double R, double rho);

// Random smooth subharmonic psi <= 0 on the disc with psi(0) >= -1,
// generated from a positive source via the Dirichlet Green operator.
Eigen::MatrixXd hormander_sample(int M, double R, Rng& rng);

struct HormanderReport {
  double R = 0.0;
  double rho = 0.0;
  int samples = 0;
  double max_integral = 0.0;          // over `samples` draws
  double max_integral_doubled = 0.0;  // over 2 * samples draws
  double ratio = 0.0;
  bool stable = false;  // ratio < 2
};

HormanderReport hormander_check(int samples, double R, double rho,
                                uint64_t seed, int M = 129);

struct AlphaPoint {
  double beta = 0.0;
  double rate = 0.0;  // growth rate of log int exp(-beta (phi - sup phi))
};

struct AlphaScan {
  std::vector<AlphaPoint> points;
  double alpha_lower = 0.0;  // largest beta with zero growth rate
};

AlphaScan alpha_scan(const Model& model, const std::vector<double>& betas,
                     double a_max, int n_a);

}  // namespace klab
