#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <memory>
#include <optional>

#include "klab/errors.hpp"

namespace klab {

enum class ModelKind { Torus2, P1Symmetric };

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Discretized reference Kahler structure on one of the two model
/// geometries.
///
/// Torus2: periodic N x N lattice on [0,1)^2, h = 1/N, row-major indexing,
///   reference form with unit coordinate density (times an optional scale
///   factor), mu = 0, V = scale.
/// P1Symmetric: N+1 nodes on x = log|z|^2 in [-X, X], h = 2X/N, circle
///   reduced; reference psi_ref = 2 log(1+e^x), mu = 1, V = 4*pi. The fiber
///   factor 2*pi is folded into the quadrature weights, whose endpoint
///   entries also absorb the exact analytic tail masses beyond +-X.
///
/// All differential operators derive from the stiffness matrix K defined by
///   u^T K v = Integral of u * (Laplacian_omega v) omega^n,
/// symmetric, negative semidefinite, null space = constants. K depends only
/// on (kind, N, X), not on the reference potential: for n = 1 the pairing
/// Integral u Lap_phi v omega_phi^n is metric independent.
struct ModelGeometry {
  ModelKind kind = ModelKind::Torus2;
  int N = 0;          // torus: nodes per side; P1: interval count (N+1 nodes)
  double X = 0.0;     // P1 truncation half-width (0 for torus)
  double h = 0.0;     // grid spacing
  double mu = 0.0;    // Einstein constant
  double scale = 1.0; // torus volume convention factor (V = scale)
  double volume = 0.0;

  // True while the reference is the literal model reference (flat torus /
  // round P1). Synthetic-F and perturbed-reference variants clear it.
  bool standard_reference = true;

  Vec x;        // P1 node coordinates (empty for torus)
  Vec psi_ref;  // P1 reference potential samples (empty for torus)
  Vec w;        // quadrature weights of omega^n, size nodes()
  Vec f_omega;  // reference Ricci potential samples (zero for the standard
                // references, stored explicitly)
  SpMat K;      // stiffness matrix, size nodes() x nodes()

  int nodes() const { return static_cast<int>(w.size()); }
  int idx(int i, int j) const { return i * N + j; }  // torus row-major
  bool is_torus() const { return kind == ModelKind::Torus2; }
};

using Model = std::shared_ptr<const ModelGeometry>;

struct ModelOptions {
  std::optional<double> mu_override;  // synthetic runs (e.g. mu = -1 torus)
  double torus_scale = 1.0;           // volume-convention rescale hook
};

/// Build a model geometry. N must be even and >= 8; X >= 8 for P1Symmetric.
Model make_model(ModelKind kind, int N, double X = 12.0,
                 const ModelOptions& opts = {});

/// Same grid, reference Ricci potential replaced by F (after exact
/// renormalization so that Integral e^F omega^n = V). Used for the
/// synthetic-F torus (Calabi-Yau) runs.
Model with_synthetic_f(const Model& m, const Vec& F);

/// Same grid, reference replaced by omega_{phi0}: weights scale by the MA
/// density of phi0 and the new reference Ricci potential is
/// ricci_potential_of(phi0). The stiffness matrix is unchanged (n = 1).
Model perturbed_reference(const Model& m, const Vec& phi0);

/// Grid samples of a relative Kahler potential tied to a model.
struct Potential {
  Model model;
  Vec samples;

  Potential() = default;
  Potential(Model m, Vec s) : model(std::move(m)), samples(std::move(s)) {}
};

/// Samples of omega_phi^n / omega^n (= 1 + Lap_omega phi for n = 1).
struct DensityField {
  Model model;
  Vec g;
  Vec band;  // per-node sign-certification band (roundoff + h^2 floor)
  double min_density = 0.0;
  bool admissible = false;  // no node negative beyond its band
  bool degenerate = false;  // some node within (-band, 1e-8]
};

/// Scalar curvature samples; `reliable` is cleared when the density minimum
/// drops below 1e-8.
struct CurvatureField {
  Vec s;
  bool reliable = true;
};

void require_same_model(const Potential& a, const Potential& b);

DensityField ma_density(const Potential& phi);

/// Lap_omega v = W^{-1} K v (reference Laplacian).
Vec laplacian_ref(const ModelGeometry& m, const Vec& v);

/// Lap_{omega_base} v; base must be admissible.
Vec laplacian_at(const Potential& base, const Vec& v);
Vec laplacian_at(const ModelGeometry& m, const DensityField& base_density,
                 const Vec& v);

/// |grad v|^2 under omega_base, edge-averaged so that
/// Integral |grad v|^2 omega_base^n = -v^T K v exactly.
Vec grad_norm_sq(const Potential& base, const Vec& v);
Vec grad_norm_sq(const ModelGeometry& m, const DensityField& base_density,
                 const Vec& v);

/// s_{omega_phi} with mean n*mu (up to quadrature round-off).
CurvatureField scalar_curvature(const Potential& phi);

/// f_{omega_phi}, normalized so Integral e^{f} omega_phi^n = V exactly.
Vec ricci_potential_of(const Potential& phi);

/// A_omega = max_x -min_y G_x of the zero-mean discrete Green kernel
/// (scaled so that sup phi <= mean(phi) + n * A_omega for admissible phi).
double green_mean_value_bound(const ModelGeometry& m);

// --- quadrature helpers -----------------------------------------------

inline double integral_ref(const ModelGeometry& m, const Vec& u) {
  return m.w.dot(u);
}
inline double mean_ref(const ModelGeometry& m, const Vec& u) {
  return m.w.dot(u) / m.volume;
}
inline double integral_phi(const ModelGeometry& m, const Vec& g,
                           const Vec& u) {
  return m.w.dot(g.cwiseProduct(u));
}
inline double mean_phi(const ModelGeometry& m, const Vec& g, const Vec& u) {
  return integral_phi(m, g, u) / m.volume;
}

// --- deterministic random fields --------------------------------------

/// Self-contained xorshift-free deterministic generator (std::mt19937_64
/// with hand-rolled uniform/normal draws so streams are identical across
/// standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
  std::uint64_t next_u64();
  double uniform();                       // [0,1)
  double uniform(double lo, double hi);   // [lo,hi)
  double normal();                        // standard normal, Box-Muller

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Random admissible potential: low-frequency Fourier modes (torus) or a
/// few smooth bumps centered in |x| <= X/3 (P1), rescaled so the MA density
/// stays >= margin.
Potential random_admissible(const Model& m, Rng& rng, double amplitude = 0.5,
                            double margin = 0.2);

}  // namespace klab
