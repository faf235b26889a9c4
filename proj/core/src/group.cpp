#include "klab/group.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseLU>

#include "klab/metric.hpp"

namespace klab {

namespace {

double psi_round(double x) {
  // 2 log(1 + e^x), overflow-safe
  return x > 0.0 ? 2.0 * (x + std::log1p(std::exp(-x)))
                 : 2.0 * std::log1p(std::exp(x));
}

// 10-point Lagrange interpolation of grid samples at xq, with constant
// extension outside [-X, X].  The high order keeps the interpolation error
// well below the composition tolerances exercised on the group action.
double interp10(const ModelGeometry& m, const Vec& v, double xq) {
  constexpr int kPts = 10;
  const int n = m.nodes();
  if (xq <= m.x[0]) return v[0];
  if (xq >= m.x[n - 1]) return v[n - 1];
  int j0 = static_cast<int>(std::floor((xq - m.x[0]) / m.h)) - (kPts / 2 - 1);
  j0 = std::clamp(j0, 0, n - kPts);
  double out = 0.0;
  for (int k = 0; k < kPts; ++k) {
    double lk = 1.0;
    for (int l = 0; l < kPts; ++l) {
      if (l == k) continue;
      lk *= (xq - m.x[j0 + l]) / (m.x[j0 + k] - m.x[j0 + l]);
    }
    out += lk * v[j0 + k];
  }
  return out;
}

void require_orbit_model(const ModelGeometry& m) {
  if (m.kind != ModelKind::P1Symmetric || !m.standard_reference)
    throw ModelMismatch("group action requires the standard sphere model");
}

struct Golden {
  double arg = 0.0;
  double value = 0.0;
};

template <typename F>
Golden golden_min(F&& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  Golden g;
  g.arg = 0.5 * (a + b);
  g.value = f(g.arg);
  return g;
}

// Coarse scan + golden-section; throws when the minimizer sits at the edge
// of the search window.
template <typename F>
Golden window_min(F&& f, double window, const char* what) {
  const int n_coarse = 33;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_coarse; ++i) {
    double a = -window + 2.0 * window * i / (n_coarse - 1);
    double v = f(a);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best == 0 || best == n_coarse - 1)
    throw TruncationExceeded(std::string(what) +
                             ": minimizer at the search window edge");
  double step = 2.0 * window / (n_coarse - 1);
  double lo = -window + step * (best - 1);
  double hi = -window + step * (best + 1);
  return golden_min(f, lo, hi, 1e-9 * std::max(1.0, window));
}

}  // namespace

Potential act(const Model& model, double a, const Vec& phi) {
  const ModelGeometry& m = *model;
  require_orbit_model(m);
  if (2.0 * std::abs(a) >= 0.5 * m.X)
    throw TruncationExceeded("act: shift exceeds the truncation margin");
  const int n = m.nodes();
  Vec out(n);
  bool trivial_phi = phi.size() == 0;
  for (int i = 0; i < n; ++i) {
    double xq = m.x[i] + 2.0 * a;
    double shift = psi_round(xq) - m.psi_ref[i] - 2.0 * a;
    double moved = 0.0;
    if (!trivial_phi)
      moved = (a == 0.0) ? phi[i] : interp10(m, phi, xq);
    out[i] = shift + moved;
  }
  return Potential(model, out);
}

OrbitScan orbit_scan(const Model& model, const Vec& eta,
                     const std::vector<double>& as) {
  OrbitScan scan;
  for (double a : as) {
    Potential p = act(model, a, eta);
    OrbitPoint pt;
    pt.a = a;
    AubinValues av = aubin(p);
    pt.F_eta = av.I_minus_J;
    pt.J = av.J;
    pt.E = mabuchi(p).E_fano;
    pt.am_const = -2.0 * a;
    scan.points.push_back(pt);
    scan.window = std::max(scan.window, std::abs(a));
  }
  return scan;
}

GroupInf jG(const Model& model, const Vec& phi, double window) {
  Golden g = window_min(
      [&](double a) { return aubin(act(model, a, phi)).J; }, window, "jG");
  GroupInf out;
  out.value = g.value;
  out.argmin = g.arg;
  out.interior = true;
  return out;
}

GroupInf d1G(const Potential& u, const Potential& v, double window) {
  require_same_model(u, v);
  Golden g = window_min(
      [&](double a) { return d1_pythagorean(u, act(u.model, a, v.samples)); },
      window, "d1G");
  GroupInf out;
  out.value = std::max(0.0, g.value);
  out.argmin = g.arg;
  out.interior = true;
  return out;
}

double futaki_derivative(const Model& model, const Vec& phi, double eps) {
  double ep = mabuchi(act(model, eps, phi)).E_fano;
  double em = mabuchi(act(model, -eps, phi)).E_fano;
  return (ep - em) / (2.0 * eps);
}

PerpProjection perp_project(const Model& model, const Vec& v) {
  const ModelGeometry& m = *model;
  require_orbit_model(m);
  SpectralGap sg = spectral_gap(Potential(model, Vec::Zero(m.nodes())));
  const Vec& e1 = sg.eigenfield;
  double coeff = m.w.dot(e1.cwiseProduct(v)) / m.w.dot(e1.cwiseAbs2());

  PerpProjection out;
  out.coefficient = coeff;
  Vec removal = coeff * e1;
  // density is affine in the potential: find the largest fraction of the
  // removal that keeps the result admissible
  Vec g_v = ma_density(Potential(model, v)).g;
  Vec dg = (m.K * removal).cwiseQuotient(m.w);
  const double floor_g = 1e-6;
  double sigma = 1.0;
  for (int i = 0; i < m.nodes(); ++i)
    if (dg[i] > 0.0) sigma = std::min(sigma, (g_v[i] - floor_g) / dg[i]);
  sigma = std::max(sigma, 0.0);
  out.rescaled = sigma < 1.0;
  out.projected = v - sigma * removal;
  return out;
}

MTScan mt_scan(const Model& model, int n_rays, int n_steps, double step,
               Rng& rng, double mech_eps) {
  const ModelGeometry& m = *model;
  require_orbit_model(m);
  MTScan scan;
  Vec zero = Vec::Zero(m.nodes());
  for (int r = 0; r < n_rays; ++r) {
    Potential seed = random_admissible(model, rng);
    PerpProjection pp = perp_project(model, seed.samples);
    Vec dir = pp.projected;
    double amp = dir.cwiseAbs().maxCoeff();
    if (amp < 1e-12) continue;
    dir /= amp;
    // admissibility limit along the ray (density affine in the potential)
    Vec dg = (m.K * dir).cwiseQuotient(m.w);
    double tau_max = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m.nodes(); ++i)
      if (dg[i] < 0.0) tau_max = std::min(tau_max, -0.999 / dg[i]);
    double tau_step = std::min(step, 0.9 * tau_max / n_steps);
    for (int k = 1; k <= n_steps; ++k) {
      Potential p(model, (k * tau_step) * dir);
      MTRow row;
      row.J = aubin(p).J;
      row.E = mabuchi(p).E_fano;
      scan.rows.push_back(row);
    }
    // mechanism: the orbit direction is critical for I-J relative to any
    // point of the perpendicular slice
    Potential mid(model, (0.5 * n_steps * tau_step) * dir);
    double fp = aubin_relative(mid, act(model, mech_eps, zero)).I_minus_J;
    double fm = aubin_relative(mid, act(model, -mech_eps, zero)).I_minus_J;
    scan.mechanism_residuals.push_back(std::abs((fp - fm) / (2.0 * mech_eps)));
  }
  // supporting line E >= C J - D: least-squares slope, then tightest offset
  double mj = 0.0, me = 0.0;
  for (const MTRow& r : scan.rows) {
    mj += r.J;
    me += r.E;
  }
  mj /= scan.rows.size();
  me /= scan.rows.size();
  double cov = 0.0, var = 0.0;
  for (const MTRow& r : scan.rows) {
    cov += (r.J - mj) * (r.E - me);
    var += (r.J - mj) * (r.J - mj);
  }
  scan.slope = var > 0.0 ? cov / var : 0.0;
  scan.offset = 0.0;
  for (const MTRow& r : scan.rows)
    scan.offset = std::max(scan.offset, scan.slope * r.J - r.E);
  return scan;
}

double hormander_integral(const Eigen::MatrixXd& psi, double R, double rho) {
  const int M = static_cast<int>(psi.rows());
  const double h = 2.0 * R / (M - 1);
  double acc = 0.0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      double x = -R + i * h, y = -R + j * h;
      if (x * x + y * y <= rho * rho) acc += std::exp(-psi(i, j)) * h * h;
    }
  return acc;
}

Eigen::MatrixXd hormander_sample(int M, double R, Rng& rng) {
  if (M % 2 == 0) throw Error("hormander_sample: M must be odd");
  const double h = 2.0 * R / (M - 1);
  // positive source: a few random Gaussian bumps inside the disc
  int n_bumps = 2 + static_cast<int>(rng.uniform() * 3.0);
  std::vector<double> cx(n_bumps), cy(n_bumps), sg(n_bumps), amp(n_bumps);
  for (int b = 0; b < n_bumps; ++b) {
    cx[b] = rng.uniform(-0.6 * R, 0.6 * R);
    cy[b] = rng.uniform(-0.6 * R, 0.6 * R);
    sg[b] = rng.uniform(0.05 * R, 0.3 * R);
    amp[b] = rng.uniform(1.0, 50.0);
  }
  auto source = [&](double x, double y) {
    double s = 0.0;
    for (int b = 0; b < n_bumps; ++b) {
      double d2 = (x - cx[b]) * (x - cx[b]) + (y - cy[b]) * (y - cy[b]);
      s += amp[b] * std::exp(-0.5 * d2 / (sg[b] * sg[b]));
    }
    return s;
  };
  // Dirichlet solve of Lap psi = source on the interior nodes
  const int n = M - 2;
  SpMat A(n * n, n * n);
  std::vector<Eigen::Triplet<double>> trips;
  Vec rhs(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      int c = i * n + j;
      trips.emplace_back(c, c, -4.0);
      if (i > 0) trips.emplace_back(c, c - n, 1.0);
      if (i < n - 1) trips.emplace_back(c, c + n, 1.0);
      if (j > 0) trips.emplace_back(c, c - 1, 1.0);
      if (j < n - 1) trips.emplace_back(c, c + 1, 1.0);
      rhs[c] = h * h * source(-R + (i + 1) * h, -R + (j + 1) * h);
    }
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<SpMat> lu(A);
  Vec sol = lu.solve(rhs);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(M, M);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) psi(i + 1, j + 1) = sol[i * n + j];
  double center = psi((M - 1) / 2, (M - 1) / 2);
  if (center < -1.0) psi *= -1.0 / center;
  return psi;
}

HormanderReport hormander_check(int samples, double R, double rho,
                                uint64_t seed, int M) {
  if (!(rho >= 0.5 * R && rho < std::exp(-0.5) * R))
    throw Error("hormander_check: rho outside [R/2, e^{-1/2} R)");
  HormanderReport rep;
  rep.R = R;
  rep.rho = rho;
  rep.samples = samples;
  Rng rng(seed);
  double mx = 0.0;
  for (int s = 0; s < 2 * samples; ++s) {
    double v = hormander_integral(hormander_sample(M, R, rng), R, rho);
    mx = std::max(mx, v);
    if (s == samples - 1) rep.max_integral = mx;
  }
  rep.max_integral_doubled = mx;
  rep.ratio = rep.max_integral_doubled / rep.max_integral;
  rep.stable = rep.ratio < 2.0;
  return rep;
}

AlphaScan alpha_scan(const Model& model, const std::vector<double>& betas,
                     double a_max, int n_a) {
  const ModelGeometry& m = *model;
  require_orbit_model(m);
  if (n_a < 3) throw Error("alpha_scan: need n_a >= 3");
  std::vector<double> as(n_a);
  for (int k = 0; k < n_a; ++k)
    as[k] = a_max * (k + 1) / static_cast<double>(n_a);
  Vec logw = m.w.array().log();
  AlphaScan scan;
  for (double beta : betas) {
    // log of sup-normalized integral for each family member, via LSE
    std::vector<double> L(n_a);
    for (int k = 0; k < n_a; ++k) {
      Vec phi = act(model, as[k], Vec()).samples;
      phi.array() -= phi.maxCoeff();
      Vec ex = logw - beta * phi;
      double mxe = ex.maxCoeff();
      double acc = 0.0;
      for (int i = 0; i < m.nodes(); ++i) acc += std::exp(ex[i] - mxe);
      L[k] = mxe + std::log(acc);
    }
    AlphaPoint pt;
    pt.beta = beta;
    pt.rate = (L[n_a - 1] - L[n_a - 2]) / (as[n_a - 1] - as[n_a - 2]);
    scan.points.push_back(pt);
  }
  scan.alpha_lower = 0.0;
  for (const AlphaPoint& p : scan.points)
    if (p.rate <= 0.05) scan.alpha_lower = std::max(scan.alpha_lower, p.beta);
  return scan;
}

}  // namespace klab
