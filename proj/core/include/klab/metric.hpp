#pragma once

#include <vector>

#include "klab/model.hpp"

namespace klab {

enum class PathMetric { Mabuchi, Calabi, Darvas };

/// Discretized curve of potentials with per-step speeds (evaluated at the
/// step midpoints, which are admissible by convexity of the density in phi).
struct PathRecord {
  Model model;
  std::vector<double> times;
  std::vector<Vec> potentials;         // size K+1
  std::vector<double> mabuchi_speed;   // size K
  std::vector<double> calabi_speed;
  std::vector<double> darvas_speed;
};

PathRecord path_from_potentials(const Model& m,
                                const std::vector<double>& times,
                                const std::vector<Vec>& potentials);

/// Rooftop envelope P(u,v): largest omega-psh minorant of min(u,v).
/// P1Symmetric: exact convex envelope of psi_ref + min(u,v) in x.
/// Torus2: projected SOR for the obstacle problem (density >= 0, w <= min).
Potential rooftop(const Potential& u, const Potential& v);

struct DistanceReport {
  double d1 = 0.0;            // Pythagorean formula
  double d1_dtn = 0.0;        // geodesic initial-speed formula (NaN if no
                              // symmetric representation)
  double mixed_lower = 0.0;   // min of the two mixed integrals
  double mixed_upper = 0.0;   // max of the two mixed integrals
  double dC = 0.0;            // Calabi sphere distance
  double geodesic_residual_max = 0.0;  // NaN if no geodesic constructed
  bool geodesic_available = false;
};

/// d1 by the Pythagorean formula alone (cheap core used by d1G scans).
double d1_pythagorean(const Potential& u, const Potential& v);

/// Full report; the geodesic-based entries are filled whenever a symmetric
/// representation exists (always on P1Symmetric, y-invariant pairs on the
/// torus).
DistanceReport d1(const Potential& u, const Potential& v);

/// Legendre-transform geodesic with K time steps. Requires a symmetric
/// representation (throws ConvexificationFailure otherwise).
PathRecord geodesic(const Potential& u, const Potential& v, int K);

/// max over (interior t, node) of |phi_tt - |grad phi_t|^2_{omega_phi}|.
double geodesic_residual(const PathRecord& path);

/// Sum of per-step speeds times step lengths.
double path_length(const PathRecord& path, PathMetric which);

/// d_C(u,v) = 2 sqrt(V) arccos( V^{-1} Int sqrt(g_u g_v) omega^n ).
double calabi_distance(const Potential& u, const Potential& v);

}  // namespace klab
