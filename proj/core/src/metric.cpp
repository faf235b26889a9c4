#include "klab/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "klab/functionals.hpp"

namespace klab {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Indices of the lower convex hull of the graph (xs, F), via monotone chain.
std::vector<size_t> lower_hull(const std::vector<double>& xs,
                               const std::vector<double>& F) {
  std::vector<size_t> hull;
  for (size_t i = 0; i < xs.size(); ++i) {
    while (hull.size() >= 2) {
      size_t a = hull[hull.size() - 2], b = hull.back();
      double cross = (xs[i] - xs[a]) * (F[b] - F[a]) -
                     (xs[b] - xs[a]) * (F[i] - F[a]);
      if (cross >= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(i);
  }
  return hull;
}

// Discrete Legendre transform F*(p_j) = max_i (p_j x_i - F_i) for an
// increasing slope grid ps. The transform only depends on the lower convex
// hull of the samples, along which p x - F is unimodal, so a single
// forward-moving pointer finds each maximum.
std::vector<double> legendre(const std::vector<double>& xs,
                             const std::vector<double>& F,
                             const std::vector<double>& ps) {
  std::vector<size_t> hull = lower_hull(xs, F);
  std::vector<double> out(ps.size());
  size_t j = 0;
  for (size_t k = 0; k < ps.size(); ++k) {
    double p = ps[k];
    while (j + 1 < hull.size() &&
           p * xs[hull[j + 1]] - F[hull[j + 1]] >=
               p * xs[hull[j]] - F[hull[j]])
      ++j;
    out[k] = p * xs[hull[j]] - F[hull[j]];
  }
  return out;
}

struct SymmetricRep {
  std::vector<double> xs;  // sample points of the convex representative
  std::vector<double> ref; // reference part subtracted after transforms
  // Extended copies used for the transform (torus quasi-periodicity).
  std::vector<double> xs_ext;
  std::vector<double> ref_ext;
  bool torus = false;
  int profile_stride = 1;  // torus: profile index i maps to node i*N
};

bool torus_y_invariant(const ModelGeometry& m, const Vec& v) {
  double scale = 1.0 + v.cwiseAbs().maxCoeff();
  for (int i = 0; i < m.N; ++i)
    for (int j = 1; j < m.N; ++j)
      if (std::abs(v[i * m.N + j] - v[i * m.N]) > 1e-10 * scale) return false;
  return true;
}

SymmetricRep symmetric_rep(const ModelGeometry& m) {
  SymmetricRep rep;
  if (m.kind == ModelKind::P1Symmetric) {
    rep.xs.assign(m.x.data(), m.x.data() + m.x.size());
    rep.ref.assign(m.psi_ref.data(), m.psi_ref.data() + m.psi_ref.size());
    rep.xs_ext = rep.xs;
    rep.ref_ext = rep.ref;
  } else {
    if (!m.standard_reference)
      throw ConvexificationFailure(
          "torus geodesics require the standard reference");
    rep.torus = true;
    rep.profile_stride = m.N;
    for (int i = 0; i < m.N; ++i) {
      double x = i * m.h;
      rep.xs.push_back(x);
      rep.ref.push_back(x * x);  // i ddbar (x^2) = omega on the chart
    }
    // quasi-periodic extension F(x + k) = F(x) + 2kx + k^2 over k = -1..1
    for (int k = -1; k <= 1; ++k)
      for (int i = 0; i < m.N; ++i) {
        double x = i * m.h + k;
        rep.xs_ext.push_back(x);
        rep.ref_ext.push_back(x * x);
      }
  }
  return rep;
}

// Profile of a (possibly 2-D) field in the symmetric variable.
std::vector<double> profile_of(const SymmetricRep& rep, const Vec& v) {
  std::vector<double> out(rep.xs.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = v[static_cast<int>(i) * rep.profile_stride];
  return out;
}

Vec field_from_profile(const ModelGeometry& m, const SymmetricRep& rep,
                       const std::vector<double>& prof) {
  if (!rep.torus) {
    Vec out(m.nodes());
    for (int i = 0; i < m.nodes(); ++i) out[i] = prof[i];
    return out;
  }
  Vec out(m.nodes());
  for (int i = 0; i < m.N; ++i)
    for (int j = 0; j < m.N; ++j) out[i * m.N + j] = prof[i];
  return out;
}

// F-values (reference + profile) on the extended sample set.
std::vector<double> extended_F(const SymmetricRep& rep,
                               const std::vector<double>& prof) {
  std::vector<double> F(rep.xs_ext.size());
  if (!rep.torus) {
    for (size_t i = 0; i < F.size(); ++i) F[i] = rep.ref_ext[i] + prof[i];
    return F;
  }
  size_t n = rep.xs.size();
  for (size_t q = 0; q < F.size(); ++q)
    F[q] = rep.ref_ext[q] + prof[q % n];
  return F;
}

}  // namespace

PathRecord path_from_potentials(const Model& model,
                                const std::vector<double>& times,
                                const std::vector<Vec>& potentials) {
  if (times.size() != potentials.size() || times.size() < 2)
    throw Error("path_from_potentials: need >= 2 timestamped potentials");
  const ModelGeometry& m = *model;
  PathRecord path;
  path.model = model;
  path.times = times;
  path.potentials = potentials;
  for (size_t k = 0; k + 1 < times.size(); ++k) {
    double dt = times[k + 1] - times[k];
    if (dt <= 0.0) throw Error("path_from_potentials: times not increasing");
    Vec dot = (potentials[k + 1] - potentials[k]) / dt;
    Vec mid = 0.5 * (potentials[k] + potentials[k + 1]);
    DensityField d = ma_density(Potential(model, mid));
    path.mabuchi_speed.push_back(
        std::sqrt(integral_phi(m, d.g, dot.cwiseAbs2())));
    Vec lap = (m.K * dot).cwiseQuotient(m.w.cwiseProduct(d.g.cwiseMax(1e-12)));
    path.calabi_speed.push_back(
        std::sqrt(integral_phi(m, d.g, lap.cwiseAbs2())));
    path.darvas_speed.push_back(integral_phi(m, d.g, dot.cwiseAbs()) /
                                m.volume);
  }
  return path;
}

Potential rooftop(const Potential& u, const Potential& v) {
  require_same_model(u, v);
  const ModelGeometry& m = *u.model;
  Vec ob = u.samples.cwiseMin(v.samples);

  if (m.kind == ModelKind::P1Symmetric) {
    // Exact lower convex envelope of psi_ref + ob via a monotone chain.
    const int n = m.nodes();
    std::vector<double> xs(m.x.data(), m.x.data() + n);
    std::vector<double> F(n);
    for (int i = 0; i < n; ++i) F[i] = m.psi_ref[i] + ob[i];
    std::vector<size_t> hull = lower_hull(xs, F);
    Vec P(n);
    size_t seg = 0;
    for (int i = 0; i < n; ++i) {
      while (seg + 1 < hull.size() && m.x[hull[seg + 1]] < m.x[i]) ++seg;
      size_t a = hull[seg];
      size_t b = hull[std::min(seg + 1, hull.size() - 1)];
      double env = (a == b) ? F[a]
                            : F[a] + (F[b] - F[a]) * (m.x[i] - m.x[a]) /
                                         (m.x[b] - m.x[a]);
      P[i] = env - m.psi_ref[i];
    }
    return Potential(u.model, P);
  }

  // Torus: projected SOR for the discrete obstacle problem
  //   w <= ob,  density(w) = 1 + (1/2 scale) Lap_euc w >= 0.
  const int N = m.N;
  const double relax = 1.8;
  const double off = 0.5 * m.scale * m.h * m.h;
  Vec w = ob;
  double tol = 1e-14 * (1.0 + ob.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double worst = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        int c = i * N + j;
        double nb = w[((i + 1) % N) * N + j] + w[((i + N - 1) % N) * N + j] +
                    w[i * N + (j + 1) % N] + w[i * N + (j + N - 1) % N];
        double target = 0.25 * nb + off;
        double cand = std::min(ob[c], w[c] + relax * (target - w[c]));
        worst = std::max(worst, std::abs(cand - w[c]));
        w[c] = cand;
      }
    }
    if (worst < tol) break;
  }
  return Potential(u.model, w);
}

double d1_pythagorean(const Potential& u, const Potential& v) {
  Potential P = rooftop(u, v);
  return am(u) + am(v) - 2.0 * am(P);
}

PathRecord geodesic(const Potential& u, const Potential& v, int K) {
  require_same_model(u, v);
  if (K < 2) throw Error("geodesic: need K >= 2 steps");
  const ModelGeometry& m = *u.model;
  if (m.is_torus() &&
      (!torus_y_invariant(m, u.samples) || !torus_y_invariant(m, v.samples)))
    throw ConvexificationFailure(
        "torus geodesic endpoints must be y-invariant");
  DensityField du = ma_density(u), dv = ma_density(v);
  if (!du.admissible || !dv.admissible)
    throw ConvexificationFailure("geodesic endpoints not omega-psh");

  SymmetricRep rep = symmetric_rep(m);
  std::vector<double> pu = profile_of(rep, u.samples);
  std::vector<double> pv = profile_of(rep, v.samples);
  std::vector<double> Fu = extended_F(rep, pu);
  std::vector<double> Fv = extended_F(rep, pv);

  // Common slope grid: union of the hull-edge slopes of both endpoints.
  // Each transform is piecewise linear with breakpoints exactly at its
  // hull-edge slopes, so sampling the union makes the combination
  // (1-t) Fu* + t Fv* and its back-transform exact (no slope-grid error).
  std::vector<double> ps;
  for (const auto* F : {&Fu, &Fv}) {
    std::vector<size_t> hull = lower_hull(rep.xs_ext, *F);
    for (size_t j = 0; j + 1 < hull.size(); ++j) {
      size_t a = hull[j], b = hull[j + 1];
      ps.push_back(((*F)[b] - (*F)[a]) / (rep.xs_ext[b] - rep.xs_ext[a]));
    }
  }
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  if (ps.size() < 2)
    throw ConvexificationFailure("geodesic: degenerate Legendre data");

  std::vector<double> Gu = legendre(rep.xs_ext, Fu, ps);
  std::vector<double> Gv = legendre(rep.xs_ext, Fv, ps);

  std::vector<double> times;
  std::vector<Vec> pots;
  const size_t n = rep.xs.size();
  for (int k = 0; k <= K; ++k) {
    double t = static_cast<double>(k) / K;
    times.push_back(t);
    if (k == 0) {
      pots.push_back(u.samples);
      continue;
    }
    if (k == K) {
      pots.push_back(v.samples);
      continue;
    }
    std::vector<double> Gt(ps.size());
    for (size_t j = 0; j < ps.size(); ++j)
      Gt[j] = (1.0 - t) * Gu[j] + t * Gv[j];
    // invert: F_t(x) = max_j (x p_j - G_t(p_j)), argmax monotone in x
    std::vector<double> prof(n);
    size_t j = 0;
    for (size_t i = 0; i < n; ++i) {
      double x = rep.xs[i];
      while (j + 1 < ps.size() &&
             x * ps[j + 1] - Gt[j + 1] >= x * ps[j] - Gt[j])
        ++j;
      prof[i] = x * ps[j] - Gt[j] - rep.ref[i];
    }
    pots.push_back(field_from_profile(m, rep, prof));
  }
  return path_from_potentials(u.model, times, pots);
}

double geodesic_residual(const PathRecord& path) {
  if (path.times.size() < 3)
    throw Error("geodesic_residual: need >= 3 times");
  const ModelGeometry& m = *path.model;
  double worst = 0.0;
  for (size_t k = 1; k + 1 < path.times.size(); ++k) {
    double dtm = path.times[k] - path.times[k - 1];
    double dtp = path.times[k + 1] - path.times[k];
    if (std::abs(dtm - dtp) > 1e-12 * dtp)
      throw Error("geodesic_residual: nonuniform time grid");
    Vec acc = (path.potentials[k + 1] - 2.0 * path.potentials[k] +
               path.potentials[k - 1]) /
              (dtp * dtp);
    Vec dot = (path.potentials[k + 1] - path.potentials[k - 1]) / (2.0 * dtp);
    DensityField d = ma_density(Potential(path.model, path.potentials[k]));
    // Pointwise strong residual, restricted to nodes whose density is
    // certifiably positive (well above the sign-certification band): the
    // continuum equation is degenerate wherever the density vanishes, and
    // the scheme cannot certify the sign below the band.
    for (int i = 0; i < m.nodes(); ++i) {
      if (d.g[i] <= 10.0 * d.band[i]) continue;
      double gsq = 0.0;
      if (m.is_torus()) {
        int r = i / m.N, c = i % m.N;
        double ke = 0.5;
        int nb[4] = {((r + 1) % m.N) * m.N + c, ((r + m.N - 1) % m.N) * m.N + c,
                     r * m.N + (c + 1) % m.N, r * m.N + (c + m.N - 1) % m.N};
        for (int q = 0; q < 4; ++q) {
          double dd = dot[i] - dot[nb[q]];
          gsq += ke * dd * dd;
        }
      } else {
        double ke = 2.0 * M_PI / m.h;
        if (i > 0) gsq += ke * (dot[i] - dot[i - 1]) * (dot[i] - dot[i - 1]);
        if (i + 1 < m.nodes())
          gsq += ke * (dot[i] - dot[i + 1]) * (dot[i] - dot[i + 1]);
      }
      gsq *= 0.5 / (m.w[i] * d.g[i]);
      worst = std::max(worst, std::abs(acc[i] - gsq));
    }
  }
  return worst;
}

double path_length(const PathRecord& path, PathMetric which) {
  const std::vector<double>* sp = nullptr;
  switch (which) {
    case PathMetric::Mabuchi: sp = &path.mabuchi_speed; break;
    case PathMetric::Calabi: sp = &path.calabi_speed; break;
    case PathMetric::Darvas: sp = &path.darvas_speed; break;
  }
  double acc = 0.0;
  for (size_t k = 0; k + 1 < path.times.size(); ++k)
    acc += (path.times[k + 1] - path.times[k]) * (*sp)[k];
  return acc;
}

double calabi_distance(const Potential& u, const Potential& v) {
  require_same_model(u, v);
  const ModelGeometry& m = *u.model;
  Vec gu = ma_density(u).g.cwiseMax(0.0);
  Vec gv = ma_density(v).g.cwiseMax(0.0);
  double ip = m.w.dot(gu.cwiseProduct(gv).cwiseSqrt()) / m.volume;
  ip = std::min(ip, 1.0);
  return 2.0 * std::sqrt(m.volume) * std::acos(ip);
}

DistanceReport d1(const Potential& u, const Potential& v) {
  require_same_model(u, v);
  const ModelGeometry& m = *u.model;
  DistanceReport rep;
  rep.d1 = d1_pythagorean(u, v);
  Vec diff = (u.samples - v.samples).cwiseAbs();
  double mu_ = integral_phi(m, ma_density(u).g, diff) / m.volume;
  double mv_ = integral_phi(m, ma_density(v).g, diff) / m.volume;
  rep.mixed_lower = std::min(mu_, mv_);
  rep.mixed_upper = std::max(mu_, mv_);
  rep.dC = calabi_distance(u, v);

  bool symmetric_ok =
      !m.is_torus() || (m.standard_reference &&
                        torus_y_invariant(m, u.samples) &&
                        torus_y_invariant(m, v.samples));
  if (symmetric_ok && rep.d1 > 1e-12) {
    PathRecord path = geodesic(u, v, 64);
    rep.geodesic_available = true;
    rep.geodesic_residual_max = geodesic_residual(path);
    // initial Darvas speed by a second-order one-sided difference
    double dt = path.times[1] - path.times[0];
    Vec dot0 = (-3.0 * path.potentials[0] + 4.0 * path.potentials[1] -
                path.potentials[2]) /
               (2.0 * dt);
    rep.d1_dtn = integral_phi(m, ma_density(u).g, dot0.cwiseAbs()) / m.volume;
  } else {
    rep.d1_dtn = symmetric_ok ? 0.0 : kNaN;
    rep.geodesic_residual_max = kNaN;
  }
  return rep;
}

}  // namespace klab
