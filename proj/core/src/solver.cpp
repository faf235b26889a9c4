#include "klab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "klab/functionals.hpp"

namespace klab {

namespace {

double log_mean_exp(const ModelGeometry& m, const Vec& e) {
  double mx = e.maxCoeff();
  return mx + std::log((e.array() - mx).exp().matrix().dot(m.w) / m.volume);
}

SpMat bordered_matrix(const SpMat& A, const Vec& c) {
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
  return B;
}

Vec newton_direction(const ModelGeometry& m, double s, const Vec& wg,
                     const Vec& r, const Vec* pin) {
  const int n = m.nodes();
  SpMat A = m.K;
  // A += s * diag(wg)
  for (int i = 0; i < n; ++i) A.coeffRef(i, i) += s * wg[i];
  Vec rhs = -wg.cwiseProduct(r);
  if (pin) {
    Vec c = wg.cwiseProduct(*pin);
    Eigen::SparseLU<SpMat> lu(bordered_matrix(A, c));
    if (lu.info() != Eigen::Success)
      throw NonConvergence("newton_direction: bordered factorization failed");
    Vec b(n + 1);
    b.head(n) = rhs;
    b[n] = 0.0;
    Vec y = lu.solve(b);
    return y.head(n);
  }
  if (s < 0.0) {
    Eigen::SimplicialLDLT<SpMat> ldlt((-A).eval());
    if (ldlt.info() != Eigen::Success)
      throw NonConvergence("newton_direction: LDLT factorization failed");
    return ldlt.solve((-rhs).eval());
  }
  Eigen::SparseLU<SpMat> lu(A);
  if (lu.info() != Eigen::Success)
    throw NonConvergence("newton_direction: LU factorization failed");
  return lu.solve(rhs);
}

}  // namespace

bool in_parameter_set(const ModelGeometry& m, const ParamPoint& p) {
  const double eps = 1e-12;
  if (p.t < -eps || p.t > 1.0 + eps) return false;
  if (p.s <= eps) return true;
  return p.t >= 1.0 - eps && p.s <= m.mu + eps;
}

double c_of_t(const ModelGeometry& m, double t) {
  return -log_mean_exp(m, (t * m.f_omega).eval());
}

NodeResult solve_ma_equation(const Model& model, double s, const Vec& b,
                             const Potential& init, const SolveOptions& opts) {
  const ModelGeometry& m = *model;
  if (s == 0.0 && !opts.mean_normalize && !opts.deflate)
    throw NormalizationAmbiguity(
        "s = 0 solve requested without a normalization rule");
  Vec phi = init.samples;
  DensityField d = ma_density(Potential(model, phi));
  if (d.min_density <= 0.0)
    throw PositivityLoss("solve_ma_equation: initializer not admissible");

  auto residual = [&](const Vec& p, const Vec& g) {
    return (g.array().log() + s * p.array() - b.array()).matrix().eval();
  };

  NodeResult out;
  Vec r = residual(phi, d.g);
  double res = r.cwiseAbs().maxCoeff();
  out.residual_history.push_back(res);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (res <= opts.tol) {
      out.phi = Potential(model, phi);
      out.iters = iter;
      out.residual = res;
      return out;
    }
    Vec wg = m.w.cwiseProduct(d.g);
    const Vec ones = Vec::Ones(m.nodes());
    const Vec* pin = opts.deflate
                         ? opts.deflate
                         : (opts.mean_normalize && s == 0.0 ? &ones : nullptr);
    Vec delta = newton_direction(m, s, wg, r, pin);

    double alpha = 1.0;
    bool accepted = false;
    bool saw_admissible = false;
    for (int bt = 0; bt <= opts.max_backtrack; ++bt) {
      Vec trial = phi + alpha * delta;
      DensityField dt_ = ma_density(Potential(model, trial));
      if (dt_.min_density > 0.0) {
        saw_admissible = true;
        Vec rt = residual(trial, dt_.g);
        double rest = rt.cwiseAbs().maxCoeff();
        if (rest < res * (1.0 - 1e-4 * alpha) || rest <= opts.tol) {
          phi = std::move(trial);
          d = std::move(dt_);
          r = std::move(rt);
          res = rest;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!saw_admissible)
        throw PositivityLoss(
            "solve_ma_equation: step left the admissible cone");
      throw NonConvergence("solve_ma_equation: line search stalled at residual " +
                           std::to_string(res));
    }
    if (opts.mean_normalize) {
      double c = mean_phi(m, d.g, phi);
      phi.array() -= c;
      r = residual(phi, d.g);
      res = r.cwiseAbs().maxCoeff();
    }
    out.residual_history.push_back(res);
  }
  if (res <= opts.tol) {
    out.phi = Potential(model, phi);
    out.iters = opts.max_iter;
    out.residual = res;
    return out;
  }
  throw NonConvergence("solve_ma_equation: iteration cap, residual " +
                       std::to_string(res));
}

NodeResult solve_node(const Model& model, double s, double t,
                      const Potential& init, double tol) {
  const ModelGeometry& m = *model;
  if (!in_parameter_set(m, {s, t}))
    throw Error("solve_node: (s,t) outside the parameter set A");
  Vec b = t * m.f_omega + Vec::Constant(m.nodes(), c_of_t(m, t));
  SolveOptions opts;
  opts.tol = tol;
  opts.mean_normalize = (s == 0.0);
  if (m.mu > 0.0 && std::abs(s - m.mu) < 1e-12) {
    // Terminal node: the linearization kernel is the first eigenspace. A
    // deflated phase converges on the slice through the warm start, but the
    // grid breaks the dilation symmetry, so the remaining kernel-component
    // residual (the symmetry defect) stalls there. The discrete Jacobian is
    // still invertible with margin mu - lambda1, so an unconstrained polish
    // from the slice point removes it.
    SpectralGap gap = spectral_gap(init, s);
    SolveOptions deflated = opts;
    deflated.deflate = &gap.eigenfield;
    deflated.tol = std::max(tol, 1e-6);
    Potential start = init;
    int spent = 0;
    try {
      NodeResult nr = solve_ma_equation(model, s, b, init, deflated);
      if (nr.residual <= tol) return nr;
      start = nr.phi;
      spent = nr.iters;
    } catch (const NonConvergence&) {
    }
    NodeResult nr = solve_ma_equation(model, s, b, start, opts);
    nr.iters += spent;
    return nr;
  }
  return solve_ma_equation(model, s, b, init, opts);
}

std::vector<ParamPoint> default_schedule(const ModelGeometry& m) {
  std::vector<ParamPoint> sched;
  for (int k = 0; k <= 12; ++k)
    sched.push_back({-64.0 * std::pow(2.0, -k), 0.0});
  const double s_last = -1.0 / 64.0;
  for (int j = 1; j <= 16; ++j)
    sched.push_back({s_last, static_cast<double>(j) / 16.0});
  if (m.mu > 0.0) {
    for (int j = 0; j <= 32; ++j)
      sched.push_back({m.mu * static_cast<double>(j) / 32.0, 1.0});
  } else {
    sched.push_back({0.0, 1.0});
  }
  return sched;
}

namespace {

NodeDiagnostics node_diagnostics(const NodeResult& nr) {
  NodeDiagnostics d;
  d.iters = nr.iters;
  d.residual = nr.residual;
  d.max_abs_phi = nr.phi.samples.cwiseAbs().maxCoeff();
  d.osc = nr.phi.samples.maxCoeff() - nr.phi.samples.minCoeff();
  DensityField df = ma_density(nr.phi);
  d.min_density = df.min_density;
  d.max_density = df.g.maxCoeff();
  d.lambda1 = spectral_gap(nr.phi).lambda1;
  d.E = mabuchi(nr.phi).E_fano;
  return d;
}

}  // namespace

ContinuityTrace continuity_run(const Model& model,
                               const std::vector<ParamPoint>& schedule,
                               double tol) {
  const ModelGeometry& m = *model;
  if (schedule.empty()) throw Error("continuity_run: empty schedule");
  if (std::abs(schedule.front().t) > 1e-12)
    throw Error("continuity_run: schedule must start at t = 0");
  for (const auto& p : schedule)
    if (!in_parameter_set(m, p))
      throw Error("continuity_run: schedule leaves the parameter set A");

  ContinuityTrace trace;
  Potential phi(model, Vec::Zero(m.nodes()));
  ParamPoint cur = schedule.front();

  // Solve a target from the current warm start, bisecting the parameter
  // segment on failure (depth cap 8).
  std::function<bool(ParamPoint, int)> attempt = [&](ParamPoint target,
                                                     int depth) -> bool {
    try {
      NodeResult nr = solve_node(model, target.s, target.t, phi, tol);
      phi = nr.phi;
      cur = target;
      trace.nodes.push_back({target, nr.phi, node_diagnostics(nr)});
      return true;
    } catch (const NonConvergence&) {
    } catch (const PositivityLoss&) {
    }
    if (depth >= 8) return false;
    ParamPoint mid{0.5 * (cur.s + target.s), 0.5 * (cur.t + target.t)};
    return attempt(mid, depth + 1) && attempt(target, depth + 1);
  };

  for (const auto& p : schedule) {
    if (!attempt(p, 0)) {
      trace.completed = false;
      trace.failure = "StepTooLarge: warm start diverged near (s,t) = (" +
                      std::to_string(p.s) + ", " + std::to_string(p.t) + ")";
      return trace;
    }
  }
  trace.completed = true;
  return trace;
}

SpectralGap spectral_gap(const Potential& base, double /*s*/) {
  const ModelGeometry& m = *base.model;
  DensityField d = ma_density(base);
  if (d.min_density <= 0.0)
    throw PositivityLoss("spectral_gap: base density not strictly positive");
  const int n = m.nodes();
  Vec B = m.w.cwiseProduct(d.g);
  Eigen::SparseLU<SpMat> lu(bordered_matrix((-m.K).eval(), B));
  if (lu.info() != Eigen::Success)
    throw NonConvergence("spectral_gap: factorization failed");

  Vec u(n);
  for (int i = 0; i < n; ++i) u[i] = std::sin(0.618 * (i + 1));
  u.array() -= B.dot(u) / B.sum();
  double lambda = 0.0;
  SpectralGap out;
  for (int iter = 0; iter < 1000; ++iter) {
    Vec rhs(n + 1);
    rhs.head(n) = B.cwiseProduct(u);
    rhs[n] = 0.0;
    Vec y = lu.solve(rhs);
    Vec v = y.head(n);
    v /= std::sqrt(v.dot(B.cwiseProduct(v)));
    double lam = v.dot((-m.K) * v) / v.dot(B.cwiseProduct(v));
    u = v;
    if (iter > 0 && std::abs(lam - lambda) <= 1e-10 * std::abs(lam)) {
      out.lambda1 = lam;
      out.eigenfield = u / u.cwiseAbs().maxCoeff();
      out.iters = iter + 1;
      return out;
    }
    lambda = lam;
  }
  throw NonConvergence("spectral_gap: inverse iteration cap reached");
}

AprioriReport apriori_report(const ContinuityTrace& trace) {
  AprioriReport rep;
  if (trace.nodes.empty()) throw Error("apriori_report: empty trace");
  const ModelGeometry& m = *trace.nodes.front().phi.model;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // Fit the Laplacian-bound exponent c over nodes with nontrivial
  // oscillation: log(n + max Lap phi) ~ log C + c * osc.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& nd : trace.nodes) {
    double osc = nd.diag.osc;
    if (osc < 1e-9) continue;
    double y = std::log(nd.diag.max_density);  // = log(n + max Lap phi), n = 1
    sx += osc;
    sy += y;
    sxx += osc * osc;
    sxy += osc * y;
    ++cnt;
  }
  rep.c_lap = (cnt >= 2 && sxx * cnt - sx * sx > 1e-30)
                  ? (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx)
                  : 0.0;

  double prev_E = nan;
  double prev_s = nan;
  for (const auto& nd : trace.nodes) {
    AprioriRow row;
    row.s = nd.p.s;
    row.t = nd.p.t;
    row.osc = nd.diag.osc;
    row.max_abs_phi = nd.diag.max_abs_phi;
    row.lambda1 = nd.diag.lambda1;
    row.E = nd.diag.E;
    row.lap_ratio = nd.diag.max_density / std::exp(rep.c_lap * nd.diag.osc);
    row.negc0_bound = nan;
    row.sup_slack = nan;
    row.gap_margin = nan;
    if (nd.p.s < 0.0) {
      double bound =
          (-c_of_t(m, nd.p.t) - nd.p.t * m.f_omega.minCoeff()) / (-nd.p.s);
      row.negc0_bound = bound;
      row.sup_slack = bound - nd.phi.samples.maxCoeff();
      if (row.sup_slack < -1e-8 * (1.0 + std::abs(bound)))
        rep.violations.push_back("negative-s sup bound violated at s = " +
                                 std::to_string(nd.p.s));
    }
    if (nd.p.t >= 1.0 - 1e-12 && nd.p.s < m.mu - 1e-12) {
      row.gap_margin = nd.diag.lambda1 - nd.p.s;
      // The discrete lambda1 sits O(h^2) below the continuum value, so the
      // margin may dip slightly negative on nodes approaching s = mu.
      if (row.gap_margin <= -1e-3 * std::max(1.0, nd.p.s))
        rep.violations.push_back("Poincare gap violated at s = " +
                                 std::to_string(nd.p.s));
    }
    if (nd.p.t >= 1.0 - 1e-12 && nd.p.s >= -1e-12) {
      if (nd.p.s > 1e-9)
        rep.C_sup = std::max(
            rep.C_sup, nd.phi.samples.maxCoeff() / (1.0 + 1.0 / nd.p.s));
      if (!std::isnan(prev_E) && nd.p.s > prev_s &&
          nd.diag.E > prev_E + 1e-9 * (1.0 + std::abs(prev_E)))
        rep.violations.push_back("K-energy increased between s = " +
                                 std::to_string(prev_s) + " and s = " +
                                 std::to_string(nd.p.s));
      prev_E = nd.diag.E;
      prev_s = nd.p.s;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace klab
