#include "klab/model.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/SparseLU>

namespace klab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double psi_round(double x) { return 2.0 * std::log1p(std::exp(-std::abs(x))) +
                                    2.0 * std::max(x, 0.0); }
// psi'' = 2 e^x / (1+e^x)^2 = (1/2) sech^2(x/2), evaluated overflow-safe.
double psi_round_dd(double x) {
  double e = std::exp(-std::abs(x));
  double d = 1.0 + e;
  return 2.0 * e / (d * d);
}
// psi' = 2 e^x / (1+e^x)
double psi_round_d(double x) {
  double e = std::exp(-std::abs(x));
  return x >= 0.0 ? 2.0 / (1.0 + e) : 2.0 * e / (1.0 + e);
}

SpMat torus_stiffness(int N) {
  // u^T K v = sum over lattice edges of -1/2 (u_i-u_j)(v_i-v_j):
  // K = (h^2/2) * periodic 5-point Laplacian, independent of h since
  // the entries (1/2, -2) carry the h^2 volume factor exactly.
  const int n = N * N;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * n);
  auto id = [N](int i, int j) {
    return ((i + N) % N) * N + ((j + N) % N);
  };
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      int c = id(i, j);
      trip.emplace_back(c, c, -2.0);
      trip.emplace_back(c, id(i + 1, j), 0.5);
      trip.emplace_back(c, id(i - 1, j), 0.5);
      trip.emplace_back(c, id(i, j + 1), 0.5);
      trip.emplace_back(c, id(i, j - 1), 0.5);
    }
  }
  SpMat K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

SpMat p1_stiffness(int N, double h) {
  // 1-D Neumann stiffness with edge weight 2*pi/h (the fiber factor).
  const int n = N + 1;
  const double ke = kTwoPi / h;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * n);
  for (int e = 0; e < N; ++e) {
    trip.emplace_back(e, e, -ke);
    trip.emplace_back(e + 1, e + 1, -ke);
    trip.emplace_back(e, e + 1, ke);
    trip.emplace_back(e + 1, e, ke);
  }
  SpMat K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

// Solve the bordered system [A c; c^T 0] [y; lam] = [b; 0]. Used for the
// Green kernel where A = K is singular on constants.
class BorderedSolver {
 public:
  BorderedSolver(const SpMat& A, const Vec& c) {
    const int n = static_cast<int>(A.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(A.nonZeros() + 2 * n);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n; ++i) {
      trip.emplace_back(i, n, c[i]);
      trip.emplace_back(n, i, c[i]);
    }
    SpMat B(n + 1, n + 1);
    B.setFromTriplets(trip.begin(), trip.end());
    lu_.compute(B);
    n_ = n;
  }
  bool ok() const { return lu_.info() == Eigen::Success; }
  Vec solve(const Vec& b) const {
    Vec rhs(n_ + 1);
    rhs.head(n_) = b;
    rhs[n_] = 0.0;
    Vec y = lu_.solve(rhs);
    return y.head(n_);
  }

 private:
  Eigen::SparseLU<SpMat> lu_;
  int n_ = 0;
};

}  // namespace

Model make_model(ModelKind kind, int N, double X, const ModelOptions& opts) {
  if (N < 8 || N % 2 != 0)
    throw Error("make_model: N must be even and >= 8 (got " +
                std::to_string(N) + ")");
  auto m = std::make_shared<ModelGeometry>();
  m->kind = kind;
  m->N = N;
  if (kind == ModelKind::Torus2) {
    m->X = 0.0;
    m->h = 1.0 / N;
    m->mu = opts.mu_override.value_or(0.0);
    m->scale = opts.torus_scale;
    const int n = N * N;
    m->w = Vec::Constant(n, m->scale * m->h * m->h);
    m->f_omega = Vec::Zero(n);
    m->K = torus_stiffness(N);
  } else {
    if (X < 8.0) throw Error("make_model: P1Symmetric requires X >= 8");
    m->X = X;
    m->h = 2.0 * X / N;
    m->mu = opts.mu_override.value_or(1.0);
    const int n = N + 1;
    m->x = Vec::LinSpaced(n, -X, X);
    m->psi_ref = m->x.unaryExpr([](double t) { return psi_round(t); });
    m->w = Vec(n);
    for (int i = 0; i < n; ++i) {
      double c = (i == 0 || i == N) ? 0.5 : 1.0;
      m->w[i] = kTwoPi * c * m->h * psi_round_dd(m->x[i]);
    }
    // Exact tail masses beyond the truncation: int_{-inf}^{-X} psi'' = psi'(-X)
    // and int_{X}^{inf} psi'' = 2 - psi'(X), lumped into the endpoint weights
    // so the stored volume is the honest mass of omega.
    m->w[0] += kTwoPi * psi_round_d(-X);
    m->w[N] += kTwoPi * (2.0 - psi_round_d(X));
    m->f_omega = Vec::Zero(n);
    m->K = p1_stiffness(N, m->h);
  }
  m->volume = m->w.sum();
  return m;
}

void require_same_model(const Potential& a, const Potential& b) {
  if (a.model != b.model)
    throw ModelMismatch("potentials tied to different model geometries");
}

DensityField ma_density(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  DensityField d;
  d.model = phi.model;
  d.g = Vec::Ones(m.nodes()) +
        (m.K * phi.samples).cwiseQuotient(m.w);
  d.min_density = d.g.minCoeff();
  // Sign certification band. Two effects keep the scheme from certifying
  // the sign of a near-zero density: (a) roundoff in the stiffness
  // application, ~eps * sum_j |K_ij||phi_j| per row, amplified by 1/w_i on
  // near-zero-weight boundary rows; (b) the h^2 truncation error of the
  // second differences, which dominates wherever the true density is below
  // the resolution floor (e.g. strongly shifted sphere potentials). The
  // roundoff scale is set by the full Kahler potential psi_ref + phi, not
  // phi alone: a potential computed as a difference of reference values
  // carries eps * |psi_ref| noise per sample. Nodes negative within the
  // band are flagged degenerate, not inadmissible; the raw values are kept
  // so the linear quadrature identities stay exact.
  Vec scale = phi.samples.cwiseAbs();
  if (m.psi_ref.size() == scale.size()) scale += m.psi_ref.cwiseAbs();
  Vec noise = (m.K.cwiseAbs() * scale).cwiseQuotient(m.w) * 64.0 *
              std::numeric_limits<double>::epsilon();
  const double floor_trunc = m.h * m.h;
  d.band = noise.cwiseMax(floor_trunc);
  d.admissible = true;
  d.degenerate = false;
  for (int i = 0; i < m.nodes(); ++i) {
    if (d.g[i] <= -d.band[i])
      d.admissible = false;
    else if (d.g[i] <= 1e-8)
      d.degenerate = true;
  }
  return d;
}

Vec laplacian_ref(const ModelGeometry& m, const Vec& v) {
  return (m.K * v).cwiseQuotient(m.w);
}

Vec laplacian_at(const ModelGeometry& m, const DensityField& base_density,
                 const Vec& v) {
  if (base_density.min_density <= 0.0)
    throw PositivityLoss("laplacian_at: base density not strictly positive");
  return (m.K * v).cwiseQuotient(m.w.cwiseProduct(base_density.g));
}

Vec laplacian_at(const Potential& base, const Vec& v) {
  return laplacian_at(*base.model, ma_density(base), v);
}

Vec grad_norm_sq(const ModelGeometry& m, const DensityField& base_density,
                 const Vec& v) {
  if (base_density.min_density <= 0.0)
    throw PositivityLoss("grad_norm_sq: base density not strictly positive");
  const int n = m.nodes();
  Vec acc = Vec::Zero(n);
  if (m.is_torus()) {
    const int N = m.N;
    const double ke = 0.5;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        int c = i * N + j;
        int e1 = i * N + (j + 1) % N;
        int e2 = ((i + 1) % N) * N + j;
        double d1 = v[c] - v[e1];
        double d2 = v[c] - v[e2];
        double q1 = ke * d1 * d1, q2 = ke * d2 * d2;
        acc[c] += 0.5 * (q1 + q2);
        acc[e1] += 0.5 * q1;
        acc[e2] += 0.5 * q2;
      }
    }
  } else {
    const double ke = kTwoPi / m.h;
    for (int e = 0; e < m.N; ++e) {
      double d = v[e] - v[e + 1];
      double q = ke * d * d;
      acc[e] += 0.5 * q;
      acc[e + 1] += 0.5 * q;
    }
  }
  return acc.cwiseQuotient(m.w.cwiseProduct(base_density.g));
}

Vec grad_norm_sq(const Potential& base, const Vec& v) {
  return grad_norm_sq(*base.model, ma_density(base), v);
}

CurvatureField scalar_curvature(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  DensityField d = ma_density(phi);
  if (d.min_density <= 0.0)
    throw PositivityLoss("scalar_curvature: density not strictly positive");
  CurvatureField out;
  out.reliable = !d.degenerate;
  Vec logg = d.g.array().log().matrix();
  Vec lap_f = laplacian_ref(m, m.f_omega);
  out.s = -laplacian_at(m, d, logg) +
          (Vec::Constant(m.nodes(), m.mu) + lap_f).cwiseQuotient(d.g);
  return out;
}

Vec ricci_potential_of(const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  DensityField d = ma_density(phi);
  if (d.min_density <= 0.0)
    throw PositivityLoss("ricci_potential_of: density not strictly positive");
  Vec raw = m.f_omega - m.mu * phi.samples -
            d.g.array().log().matrix();
  // Fix the additive constant so Integral e^f omega_phi^n = V exactly:
  // g * e^raw = e^{f_omega - mu phi} is evaluated in log space for safety.
  Vec expo = m.f_omega - m.mu * phi.samples;
  double mx = expo.maxCoeff();
  double c = mx + std::log((expo.array() - mx).exp().matrix().dot(m.w) /
                           m.volume);
  return raw - Vec::Constant(m.nodes(), c);
}

Model with_synthetic_f(const Model& m, const Vec& F) {
  if (F.size() != m->nodes())
    throw Error("with_synthetic_f: field size mismatch");
  auto out = std::make_shared<ModelGeometry>(*m);
  double mx = F.maxCoeff();
  double c = mx + std::log((F.array() - mx).exp().matrix().dot(m->w) /
                           m->volume);
  out->f_omega = F - Vec::Constant(m->nodes(), c);
  out->standard_reference = false;
  return out;
}

Model perturbed_reference(const Model& m, const Vec& phi0) {
  Potential p(m, phi0);
  DensityField d = ma_density(p);
  if (d.min_density <= 0.0)
    throw PositivityLoss("perturbed_reference: phi0 density not positive");
  auto out = std::make_shared<ModelGeometry>(*m);
  out->w = m->w.cwiseProduct(d.g);
  out->volume = out->w.sum();
  if (m->psi_ref.size()) out->psi_ref = m->psi_ref + phi0;
  out->f_omega = ricci_potential_of(p);
  out->standard_reference = false;
  return out;
}

double green_mean_value_bound(const ModelGeometry& m) {
  BorderedSolver solver(m.K, m.w);
  if (!solver.ok()) throw Error("green_mean_value_bound: factorization failed");
  const int n = m.nodes();
  auto kernel_min = [&](int x) {
    Vec b = m.w;
    b[x] -= m.volume;
    Vec G = solver.solve(b);
    // zero-mean normalization
    G.array() -= m.w.dot(G) / m.volume;
    return -G.minCoeff();
  };
  if (m.is_torus()) return kernel_min(0);  // translation invariant
  double A = 0.0;
  for (int x = 0; x < n; ++x) A = std::max(A, kernel_min(x));
  return A;
}

// --- deterministic RNG -------------------------------------------------

std::uint64_t Rng::next_u64() {
  // splitmix64: tiny, portable, and identical across standard libraries.
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double th = kTwoPi * u2;
  spare_ = r * std::sin(th);
  have_spare_ = true;
  return r * std::cos(th);
}

Potential random_admissible(const Model& m, Rng& rng, double amplitude,
                            double margin) {
  const int n = m->nodes();
  Vec phi = Vec::Zero(n);
  if (m->is_torus()) {
    const int N = m->N;
    for (int k = -3; k <= 3; ++k) {
      for (int l = 0; l <= 3; ++l) {
        if (l == 0 && k <= 0) continue;
        int q2 = k * k + l * l;
        if (q2 > 9) continue;
        double a = amplitude * rng.normal() / q2;
        double th = rng.uniform(0.0, kTwoPi);
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < N; ++j) {
            double xx = static_cast<double>(i) / N;
            double yy = static_cast<double>(j) / N;
            phi[i * N + j] += a * std::cos(kTwoPi * (k * xx + l * yy) + th);
          }
        }
      }
    }
  } else {
    for (int b = 0; b < 4; ++b) {
      double a = amplitude * rng.normal();
      double c = rng.uniform(-m->X / 3.0, m->X / 3.0);
      double s = rng.uniform(1.0, 2.5);
      for (int i = 0; i < n; ++i) {
        double t = (m->x[i] - c) / s;
        phi[i] += a * std::exp(-0.5 * t * t);
      }
    }
  }
  // The density is affine in phi, so one rescale pins the margin exactly.
  Vec lap = laplacian_ref(*m, phi);
  double mn = lap.minCoeff();
  if (1.0 + mn < margin) phi *= (1.0 - margin) / (-mn);
  return Potential(m, phi);
}

}  // namespace klab
