// klab: experiment runner for the kahler-lab library. Dispatches the
// numbered tasks to the core modules, persists snapshots/CSV traces with a
// provenance header, and reproduces the acceptance suite end-to-end.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "klab/flow.hpp"
#include "klab/functionals.hpp"
#include "klab/group.hpp"
#include "klab/metric.hpp"
#include "klab/snapshot.hpp"
#include "klab/solver.hpp"

namespace fs = std::filesystem;
using namespace klab;

namespace {

constexpr const char* kVersion = "1.0.0";
constexpr double kPi = 3.14159265358979323846;

// ----------------------------------------------------------------------
// provenance

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct GlobalOpts {
  std::string model = "p1";
  int N = 512;
  double X = 16.0;
  uint64_t seed = 7;
  int jobs = 1;
  std::string out = ".";
  std::string config_string;  // canonical form for the provenance hash
};

std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_header(std::ostream& os, const GlobalOpts& g) {
  os << "# klab " << kVersion << "\n";
  os << "# config " << hex64(fnv1a(g.config_string)) << "\n";
  os << "# seed " << g.seed << "\n";
}

std::ofstream open_csv(const GlobalOpts& g, const std::string& name) {
  fs::path p = fs::path(g.out) / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw Error("cannot open output file: " + p.string());
  write_header(os, g);
  return os;
}

Model model_from(const GlobalOpts& g) {
  if (g.model == "torus") return make_model(ModelKind::Torus2, g.N, g.X);
  if (g.model == "p1") return make_model(ModelKind::P1Symmetric, g.N, g.X);
  throw Error("unknown model: " + g.model);
}

std::string fmt(double v) { return format_full(v); }

// ----------------------------------------------------------------------
// task: functionals

int run_functionals(const GlobalOpts& g, const std::string& in,
                    const std::string& csv) {
  Potential phi = load_snapshot(in);
  FunctionalReport r = mabuchi(phi);
  auto os = open_csv(g, csv);
  os << "I,J,I_minus_J,AM,entropy_ref,entropy_plain,E_fano,E_csc\n";
  os << fmt(r.I) << ',' << fmt(r.J) << ',' << fmt(r.I_minus_J) << ','
     << fmt(r.AM) << ',' << fmt(r.entropy_ref) << ',' << fmt(r.entropy_plain)
     << ',' << fmt(r.E_fano) << ',' << fmt(r.E_csc) << '\n';
  return 0;
}

// ----------------------------------------------------------------------
// task: continuity

void write_trace_csv(std::ostream& os, const ContinuityTrace& trace,
                     const AprioriReport& rep) {
  os << "s,t,iters,residual,maxphi,osc,lambda1,gap_margin\n";
  for (size_t k = 0; k < trace.nodes.size(); ++k) {
    const TraceNode& n = trace.nodes[k];
    const AprioriRow& row = rep.rows[k];
    os << fmt(n.p.s) << ',' << fmt(n.p.t) << ',' << n.diag.iters << ','
       << fmt(n.diag.residual) << ',' << fmt(n.diag.max_abs_phi) << ','
       << fmt(n.diag.osc) << ',' << fmt(n.diag.lambda1) << ','
       << fmt(row.gap_margin) << '\n';
  }
}

int run_continuity(const GlobalOpts& g, const std::string& trace_csv,
                   const std::string& snapshot_dir) {
  Model m = model_from(g);
  ContinuityTrace trace = continuity_run(m, default_schedule(*m));
  AprioriReport rep = apriori_report(trace);
  auto os = open_csv(g, trace_csv);
  write_trace_csv(os, trace, rep);
  if (!snapshot_dir.empty()) {
    fs::create_directories(fs::path(g.out) / snapshot_dir);
    for (size_t k = 0; k < trace.nodes.size(); ++k) {
      std::ostringstream name;
      name << "node_" << std::setw(3) << std::setfill('0') << k << ".snap";
      save_snapshot((fs::path(g.out) / snapshot_dir / name.str()).string(),
                    trace.nodes[k].phi);
    }
  }
  if (!trace.completed) throw NonConvergence("continuity: " + trace.failure);
  return 0;
}

// ----------------------------------------------------------------------
// task: flow

void write_flow_csv(std::ostream& os, const FlowTrajectory& traj) {
  os << "time,E,calabi_speed,darvas_speed,mabuchi_speed,densL1_increment\n";
  for (size_t k = 0; k < traj.times.size(); ++k) {
    const FlowStateDiag& s = traj.states[k];
    double inc = k == 0 ? 0.0 : traj.steps[k - 1].dens_l1_increment;
    os << fmt(s.time) << ',' << fmt(s.E) << ',' << fmt(s.calabi_speed) << ','
       << fmt(s.darvas_speed) << ',' << fmt(s.mabuchi_speed) << ',' << fmt(inc)
       << '\n';
  }
}

int run_flow(const GlobalOpts& g, const std::string& f_file, double T,
             double dt, const std::string& trace_csv) {
  Model m0 = model_from(g);
  Model m = m0;
  if (!f_file.empty()) m = with_synthetic_f(m0, load_field(f_file, m0));
  Rng rng(g.seed);
  Potential p0 = random_admissible(m, rng, 0.1, 0.3);
  FlowTrajectory traj = krf_run(m, p0, T, dt);
  auto os = open_csv(g, trace_csv);
  write_flow_csv(os, traj);
  if (!traj.completed) throw NonConvergence("flow: " + traj.failure);
  return 0;
}

// ----------------------------------------------------------------------
// task: distance / geodesic

Potential load_field_onto(const Potential& ref, const std::string& path) {
  return Potential(ref.model, load_field(path, ref.model));
}

int run_distance(const GlobalOpts& g, const std::string& a,
                 const std::string& b, const std::string& csv) {
  Potential u = load_snapshot(a);
  Potential v = load_field_onto(u, b);
  DistanceReport rep = d1(u, v);
  auto os = open_csv(g, csv);
  os << "d1,d1_dtn,mixed_lower,mixed_upper,dC,geodesic_residual_max,"
        "geodesic_available\n";
  os << fmt(rep.d1) << ',' << fmt(rep.d1_dtn) << ',' << fmt(rep.mixed_lower)
     << ',' << fmt(rep.mixed_upper) << ',' << fmt(rep.dC) << ','
     << fmt(rep.geodesic_residual_max) << ',' << (rep.geodesic_available ? 1 : 0)
     << '\n';
  return 0;
}

int run_geodesic(const GlobalOpts& g, const std::string& a,
                 const std::string& b, int K) {
  Potential u = load_snapshot(a);
  Potential v = load_field_onto(u, b);
  PathRecord path = geodesic(u, v, K);
  fs::create_directories(g.out);
  auto os = open_csv(g, "geodesic.csv");
  os << "t,mabuchi_speed,calabi_speed,darvas_speed\n";
  for (size_t k = 0; k + 1 < path.times.size(); ++k)
    os << fmt(path.times[k]) << ',' << fmt(path.mabuchi_speed[k]) << ','
       << fmt(path.calabi_speed[k]) << ',' << fmt(path.darvas_speed[k]) << '\n';
  for (size_t k = 0; k < path.potentials.size(); ++k) {
    std::ostringstream name;
    name << "slice_" << std::setw(3) << std::setfill('0') << k << ".snap";
    save_snapshot((fs::path(g.out) / name.str()).string(),
                  Potential(u.model, path.potentials[k]));
  }
  return 0;
}

// ----------------------------------------------------------------------
// task: orbit / mt-scan / alpha

int run_orbit(const GlobalOpts& g, const std::string& eta_file, double window,
              int steps, const std::string& csv) {
  Model m = model_from(g);
  Vec eta = Vec::Zero(m->nodes());
  if (!eta_file.empty()) eta = load_field(eta_file, m);
  std::vector<double> as;
  for (int k = 0; k < steps; ++k)
    as.push_back(-window + 2.0 * window * k / (steps - 1));
  OrbitScan scan = orbit_scan(m, eta, as);
  auto os = open_csv(g, csv);
  os << "a,F_eta,E,J,am_const\n";
  for (const OrbitPoint& p : scan.points)
    os << fmt(p.a) << ',' << fmt(p.F_eta) << ',' << fmt(p.E) << ','
       << fmt(p.J) << ',' << fmt(p.am_const) << '\n';
  return 0;
}

int run_mt_scan(const GlobalOpts& g, int rays, int steps, double step,
                const std::string& csv) {
  Model m = model_from(g);
  Rng rng(g.seed);
  MTScan scan = mt_scan(m, rays, steps, step, rng);
  auto os = open_csv(g, csv);
  os << "J,E\n";
  for (const MTRow& r : scan.rows) os << fmt(r.J) << ',' << fmt(r.E) << '\n';
  os << "# slope " << fmt(scan.slope) << "\n";
  os << "# offset " << fmt(scan.offset) << "\n";
  return 0;
}

std::vector<double> parse_beta_range(const std::string& spec) {
  // "lo:step:hi" or a comma list.
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double lo, st, hi;
    char c1, c2;
    std::istringstream is(spec);
    if (!(is >> lo >> c1 >> st >> c2 >> hi) || c1 != ':' || c2 != ':')
      throw Error("bad --beta range: " + spec);
    for (double b = lo; b <= hi + 1e-12; b += st) out.push_back(b);
  } else {
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw Error("empty --beta range");
  return out;
}

int run_alpha(const GlobalOpts& g, const std::string& beta_spec, double a_max,
              int n_a, const std::string& csv) {
  Model m = model_from(g);
  AlphaScan scan = alpha_scan(m, parse_beta_range(beta_spec), a_max, n_a);
  auto os = open_csv(g, csv);
  os << "beta,rate\n";
  for (const AlphaPoint& p : scan.points)
    os << fmt(p.beta) << ',' << fmt(p.rate) << '\n';
  os << "# alpha_lower " << fmt(scan.alpha_lower) << "\n";
  return 0;
}

// ----------------------------------------------------------------------
// acceptance suite

struct Criterion {
  int id = 0;
  bool pass = false;
  std::string detail;
};

void report(std::vector<Criterion>& all, int id, bool pass,
            const std::string& detail,
            const std::string& console_extra = "") {
  // console_extra holds run-dependent info (wall-clock timings) that must
  // stay out of the CSV artifacts to keep reruns byte-identical.
  all.push_back({id, pass, detail});
  std::cout << "criterion " << std::setw(2) << id << ": "
            << (pass ? "PASS" : "FAIL") << "  " << detail << console_extra
            << std::endl;
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

// -- criterion 1: functional identity suite ----------------------------

void crit1(const GlobalOpts& g, std::vector<Criterion>& out) {
  auto t0 = std::chrono::steady_clock::now();
  double worst_iji = 0.0, worst_chain = 0.0, worst_trans = 0.0,
         worst_e = 0.0, worst_ent = 0.0;
  for (auto kind : {ModelKind::Torus2, ModelKind::P1Symmetric}) {
    Model m = make_model(kind, kind == ModelKind::Torus2 ? 128 : 512, 16.0);
    Rng rng(g.seed);
    Vec shift = Vec::Constant(m->nodes(), 0.37);
    for (int rep = 0; rep < 500; ++rep) {
      Potential phi = random_admissible(m, rng, 0.3);
      FunctionalReport r = mabuchi(phi);
      // (I - J) = J for n = 1 (mixed-power identity).
      worst_iji = std::max(worst_iji, std::abs(r.I_minus_J - r.J));
      worst_chain = std::max(worst_chain, std::abs(r.I - r.J - r.I_minus_J));
      worst_e = std::max(worst_e, std::abs(r.E_fano - r.E_csc));
      worst_ent = std::max(worst_ent,
                           std::max(-r.entropy_ref, -r.entropy_plain));
      FunctionalReport rs = mabuchi(Potential(m, phi.samples + shift));
      worst_trans = std::max(worst_trans, std::abs(rs.E_fano - r.E_fano));
    }
  }
  double secs = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  bool pass = worst_iji <= 1e-8 && worst_chain <= 1e-9 &&
              worst_trans <= 1e-10 && worst_e <= 1e-7 && worst_ent <= 0.0 &&
              secs <= 120.0;
  report(out, 1, pass,
         "functional identities on 2x500 random potentials (I-J split " +
             sci(worst_iji) + " <= 1e-8, chain " + sci(worst_chain) +
             " <= 1e-9, E-translation " + sci(worst_trans) +
             " <= 1e-10, E forms " + sci(worst_e) + " <= 1e-7, min entropy " +
             sci(-worst_ent) + " >= 0)",
         " [" + sci(secs) + " s <= 120]");
}

// -- criteria 2 & 3: continuity method + a priori diagnostics ----------

double psi_dd(double x) {
  double e = std::exp(-std::abs(x));
  return 2.0 * e / ((1.0 + e) * (1.0 + e));
}

double phic_of(double x, double eps) { return eps / std::cosh(0.5 * x); }

double phic_dd(double x, double eps) {
  double s = 1.0 / std::cosh(0.5 * x);
  double t = std::tanh(0.5 * x);
  return eps * 0.25 * s * (t * t - s * s);
}

double manufactured_error(int N, double X, double eps, double s) {
  auto m0 = make_model(ModelKind::P1Symmetric, N, X);
  const ModelGeometry& m = *m0;
  Vec pc(m.nodes()), F(m.nodes());
  for (int i = 0; i < m.nodes(); ++i) pc[i] = phic_of(m.x[i], eps);
  for (int i = 0; i < m.nodes(); ++i) {
    double pdd = phic_dd(m.x[i], eps);
    F[i] = std::log((psi_dd(m.x[i]) + pdd) / psi_dd(m.x[i])) + s * pc[i];
  }
  // Boundary rows carry the exact tail lumps; make the manufactured data
  // discretely consistent there.
  DensityField dc = ma_density(Potential(m0, pc));
  F[0] = std::log(dc.g[0]) + s * pc[0];
  F[m.nodes() - 1] = std::log(dc.g[m.nodes() - 1]) + s * pc[m.nodes() - 1];
  Model ms = with_synthetic_f(m0, F);
  SolveOptions opts;
  opts.tol = 1e-8;
  NodeResult nr = solve_ma_equation(ms, s, ms->f_omega,
                                    Potential(ms, Vec::Zero(m.nodes())), opts);
  int c = m.nodes() / 2;
  double worst = 0.0;
  for (int i = 0; i < m.nodes(); ++i) {
    if (std::abs(m.x[i]) > 0.5 * X) continue;
    double err = (nr.phi.samples[i] - nr.phi.samples[c]) - (pc[i] - pc[c]);
    worst = std::max(worst, std::abs(err));
  }
  return worst;
}

void crit23(const GlobalOpts& g, std::vector<Criterion>& out) {
  Model m = make_model(ModelKind::P1Symmetric, 512, 16.0);
  ContinuityTrace trace = continuity_run(m, default_schedule(*m));
  AprioriReport rep = apriori_report(trace);
  {
    auto os = open_csv(g, "continuity_trace.csv");
    write_trace_csv(os, trace, rep);
  }
  const TraceNode& last = trace.nodes.back();
  bool terminal = trace.completed && std::abs(last.p.s - m->mu) < 1e-12 &&
                  std::abs(last.p.t - 1.0) < 1e-12;
  Vec f = ricci_potential_of(last.phi);
  double osc_f = f.maxCoeff() - f.minCoeff();
  GroupInf dorb = d1G(Potential(m, Vec::Zero(m->nodes())), last.phi, 3.0);
  double e512 = manufactured_error(512, 16.0, 0.05, 0.5);
  double e1024 = manufactured_error(1024, 16.0, 0.05, 0.5);
  double order = std::log2(e512 / e1024);
  bool pass2 = terminal && osc_f <= 1e-4 && dorb.value <= 1e-3 &&
               order >= 1.8;
  report(out, 2, pass2,
         "continuity to the KE node (terminal (s,t)=(1,1): " +
             std::string(terminal ? "yes" : "no") + ", osc f " + sci(osc_f) +
             " <= 1e-4, d1 to orbit " + sci(dorb.value) +
             " <= 1e-3, refinement order " + sci(order) + " >= 1.8)");

  bool neg_ok = true, gap_ok = true, mono_ok = true;
  double prev = 1e300;
  for (const AprioriRow& row : rep.rows) {
    if (row.s < 0.0 && row.sup_slack < 0.0) neg_ok = false;
    if (row.t >= 1.0 - 1e-12 && row.s >= 0.0 && row.s < m->mu - 1e-12 &&
        row.lambda1 <= row.s)
      gap_ok = false;
    if (row.t >= 1.0 - 1e-12 && row.s >= 0.0) {
      if (row.E > prev + 1e-10) mono_ok = false;
      prev = row.E;
    }
  }
  bool pass3 = rep.violations.empty() && neg_ok && gap_ok && mono_ok;
  report(out, 3, pass3,
         "a priori diagnostics (violations " +
             std::to_string(rep.violations.size()) +
             ", s<0 sup bound: " + (neg_ok ? "holds" : "fails") +
             ", lambda1 > s: " + (gap_ok ? "holds" : "fails") +
             ", K-energy monotone: " + (mono_ok ? "yes" : "no") + ")");
}

// -- criterion 4: Calabi-Yau solve + flow cross-check -------------------

void crit4(const GlobalOpts& g, std::vector<Criterion>& out) {
  auto m0 = make_model(ModelKind::Torus2, 32);
  const ModelGeometry& mg = *m0;
  Vec F(mg.nodes());
  for (int i = 0; i < mg.N; ++i)
    for (int j = 0; j < mg.N; ++j)
      F[mg.idx(i, j)] = 0.4 * std::sin(2 * kPi * i / mg.N) *
                        std::cos(2 * kPi * j / mg.N);
  Model ms = with_synthetic_f(m0, F);
  NodeResult nr = solve_node(ms, 0.0, 1.0,
                             Potential(ms, Vec::Zero(mg.nodes())), 1e-12);
  DensityField sol = ma_density(nr.phi);
  Vec target = ms->f_omega.array().exp();
  double dens_err = ((sol.g - target).cwiseAbs().array() * ms->w.array()).sum();
  Rng rng(g.seed);
  Potential p0 = random_admissible(ms, rng, 0.1, 0.3);
  FlowTrajectory traj = krf_run(ms, p0, 30.0, 0.05);
  {
    auto os = open_csv(g, "cy_flow.csv");
    write_flow_csv(os, traj);
  }
  DensityField fin = ma_density(Potential(ms, traj.potentials.back()));
  double l1 = ((fin.g - sol.g).cwiseAbs().array() * ms->w.array()).sum() /
              ms->volume;
  bool pass = nr.residual <= 1e-9 && dens_err <= 1e-9 * ms->volume &&
              traj.completed && l1 <= 1e-5;
  report(out, 4, pass,
         "torus Calabi-Yau solve (residual " + sci(nr.residual) +
             " <= 1e-9, density match " + sci(dens_err) +
             ", flow cross-check L1 " + sci(l1) + " <= 1e-5)");
}

// -- criterion 5: metric suite ------------------------------------------

Vec psor_oracle(const ModelGeometry& m, const Vec& ob) {
  const int N = m.N;
  const double off = 0.5 * m.scale * m.h * m.h;
  Vec w = ob;
  for (int sweep = 0; sweep < 400000; ++sweep) {
    double delta = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        int c = i * N + j;
        double nb = w[((i + 1) % N) * N + j] + w[((i + N - 1) % N) * N + j] +
                    w[i * N + (j + 1) % N] + w[i * N + (j + N - 1) % N];
        double cand = std::min(ob[c], 0.25 * nb + off);
        delta = std::max(delta, std::abs(cand - w[c]));
        w[c] = cand;
      }
    }
    if (delta < 1e-15 * (1.0 + ob.cwiseAbs().maxCoeff())) break;
  }
  return w;
}

Potential torus_wave(const Model& m, double a1, double a2) {
  Vec v(m->nodes());
  for (int i = 0; i < m->N; ++i) {
    double x = static_cast<double>(i) / m->N;
    double val = a1 * std::sin(2 * kPi * x) + a2 * std::cos(4 * kPi * x);
    for (int j = 0; j < m->N; ++j) v[i * m->N + j] = val;
  }
  return Potential(m, v);
}

void crit5(const GlobalOpts& g, std::vector<Criterion>& out) {
  // (a) sphere-isometry pullback to 1e-6 relative.
  double worst_iso = 0.0;
  for (auto kind : {ModelKind::Torus2, ModelKind::P1Symmetric}) {
    Model m = make_model(kind, 64, 16.0);
    Rng rng(g.seed);
    for (int rep = 0; rep < 10; ++rep) {
      Potential phi = random_admissible(m, rng, 0.3, 0.4);
      Potential v = random_admissible(m, rng, 0.3, 0.4);
      DensityField d = ma_density(phi);
      Vec dg = (m->K * v.samples).cwiseQuotient(m->w);
      Vec dsq = dg.cwiseQuotient(d.g.cwiseSqrt());
      double lhs = (dsq.array().square() * m->w.array()).sum();
      Vec lap = laplacian_at(phi, v.samples);
      double rhs = (lap.array().square() * (d.g.array() * m->w.array())).sum();
      worst_iso = std::max(worst_iso, std::abs(lhs - rhs) / std::abs(rhs));
    }
  }
  // (b) d1 vs geodesic arc length vs initial-speed formula within 1%.
  Model mp = make_model(ModelKind::P1Symmetric, 512, 16.0);
  Rng rng(g.seed + 1);
  Potential u = random_admissible(mp, rng, 0.25, 0.4);
  Potential v = random_admissible(mp, rng, 0.25, 0.4);
  DistanceReport drep = d1(u, v);
  PathRecord geo = geodesic(u, v, 64);
  double arc = path_length(geo, PathMetric::Darvas);
  double mutual = std::max(std::abs(drep.d1_dtn - drep.d1),
                           std::abs(arc - drep.d1)) /
                  drep.d1;
  // Torus geodesic speed constancy at N=256.
  Model mt = make_model(ModelKind::Torus2, 256);
  PathRecord tgeo = geodesic(torus_wave(mt, 0.010, 0.000),
                             torus_wave(mt, -0.012, 0.005), 64);
  double smin = 1e300, smax = 0.0;
  for (double s : tgeo.darvas_speed) {
    smin = std::min(smin, s);
    smax = std::max(smax, s);
  }
  double t_spread = (smax - smin) / smax;
  // (c) triangle inequality on 200 triples.
  Model m128 = make_model(ModelKind::P1Symmetric, 128, 16.0);
  Rng rng3(g.seed + 2);
  bool tri_ok = true;
  for (int rep = 0; rep < 200; ++rep) {
    Potential a = random_admissible(m128, rng3, 0.3);
    Potential b = random_admissible(m128, rng3, 0.3);
    Potential c = random_admissible(m128, rng3, 0.3);
    if (d1_pythagorean(a, c) >
        d1_pythagorean(a, b) + d1_pythagorean(b, c) + 1e-10)
      tri_ok = false;
  }
  // (d) d1(u, u+c) = |c| exactly.
  Potential uc(mp, u.samples + Vec::Constant(mp->nodes(), 0.8));
  double trans_err = std::abs(d1_pythagorean(u, uc) - 0.8);
  // (e) rooftop vs brute-force PSOR at N=32 within 1e-7.
  Model m32 = make_model(ModelKind::Torus2, 32);
  Rng rng4(g.seed + 3);
  Potential ru = random_admissible(m32, rng4, 0.3);
  Potential rv = random_admissible(m32, rng4, 0.3);
  Vec ob = ru.samples.cwiseMin(rv.samples);
  double roof_err =
      (rooftop(ru, rv).samples - psor_oracle(*m32, ob)).cwiseAbs().maxCoeff();
  bool pass = worst_iso <= 1e-6 && mutual <= 0.01 && t_spread <= 0.01 &&
              tri_ok && trans_err <= 1e-10 && roof_err <= 1e-7;
  report(out, 5, pass,
         "metric suite (isometry " + sci(worst_iso) + " <= 1e-6, d1 forms " +
             sci(mutual) + " <= 1e-2, torus speed spread " + sci(t_spread) +
             " <= 1e-2, triangle 200/200: " + (tri_ok ? "ok" : "fail") +
             ", d1 translation " + sci(trans_err) + " <= 1e-10, rooftop " +
             sci(roof_err) + " <= 1e-7)");
}

// -- criterion 6: flow-length criteria -----------------------------------

void crit6(const GlobalOpts& g, std::vector<Criterion>& out) {
  // Per-step speeds vs closed-form integrands (right-endpoint states of the
  // implicit scheme), past the unresolved initial transient.
  auto m = make_model(ModelKind::Torus2, 32);
  Rng rng(g.seed);
  Potential p0 = random_admissible(m, rng, 0.05, 0.3);
  FlowOptions opts;
  opts.store_stride = 1;
  FlowTrajectory traj = krf_run(m, p0, 2.0, 0.005, opts);
  PathRecord path = path_from_potentials(m, traj.times, traj.potentials);
  double worst = 0.0;
  for (size_t k = 0; k + 1 < traj.times.size(); ++k) {
    if (traj.times[k] < 0.1) continue;
    const FlowStateDiag& s = traj.states[k + 1];
    if (s.calabi_speed > 1e-6)
      worst = std::max(worst, std::abs(path.calabi_speed[k] - s.calabi_speed) /
                                  s.calabi_speed);
    if (s.mabuchi_speed > 1e-6)
      worst = std::max(worst,
                       std::abs(path.mabuchi_speed[k] - s.mabuchi_speed) /
                           s.mabuchi_speed);
    if (s.darvas_speed > 1e-6)
      worst = std::max(worst, std::abs(path.darvas_speed[k] - s.darvas_speed) /
                                  s.darvas_speed);
  }
  // Converging run: finite tail-decaying lengths.
  FlowTrajectory conv = krf_run(m, p0, 30.0, 0.05);
  Verdict verdict = convergence_verdict(conv, VerdictOptions{20.0, 1e-5, 1e-4});
  bool lengths_ok = verdict.converged &&
                    std::isfinite(verdict.lengths.calabi_len) &&
                    std::isfinite(verdict.lengths.darvas_len) &&
                    std::isfinite(verdict.lengths.mabuchi_len);
  // Escape path: darvas length grows linearly along the orbit.
  Model mp = make_model(ModelKind::P1Symmetric, 2048, 32.0);
  auto orbit_len = [&](double T) {
    const int K = 64;
    std::vector<double> ts;
    std::vector<Vec> ps;
    for (int k = 0; k <= K; ++k) {
      double t = T * k / K;
      ts.push_back(t);
      ps.push_back(act(mp, 0.5 * t, Vec()).samples);
    }
    return path_length(path_from_potentials(mp, ts, ps), PathMetric::Darvas);
  };
  double l2 = orbit_len(2.0), l4 = orbit_len(4.0), l6 = orbit_len(6.0);
  bool linear = std::abs(l4 / l2 - 2.0) <= 0.01 && std::abs(l6 / l2 - 3.0) <= 0.01;
  bool pass = worst <= 0.01 && lengths_ok && linear;
  report(out, 6, pass,
         "flow lengths (per-step speeds vs closed forms " + sci(worst) +
             " <= 1e-2, converged run lengths finite: " +
             (lengths_ok ? "yes" : "no") + ", escape length ratios " +
             sci(l4 / l2) + "/" + sci(l6 / l2) + " ~ 2/3: " +
             (linear ? "yes" : "no") + ")");
}

// -- criterion 7: orbit suite ---------------------------------------------

void crit7(const GlobalOpts& g, std::vector<Criterion>& out) {
  Model m = make_model(ModelKind::P1Symmetric, 8192, 32.0);
  std::vector<double> as;
  const int steps = 41;
  for (int k = 0; k < steps; ++k)
    as.push_back(-7.5 + 15.0 * k / (steps - 1));
  OrbitScan scan = orbit_scan(m, Vec::Zero(m->nodes()), as);
  {
    auto os = open_csv(g, "orbit.csv");
    os << "a,F_eta,E,J,am_const\n";
    for (const OrbitPoint& p : scan.points)
      os << fmt(p.a) << ',' << fmt(p.F_eta) << ',' << fmt(p.E) << ','
         << fmt(p.J) << ',' << fmt(p.am_const) << '\n';
  }
  double e_max = 0.0, j0 = 0.0;
  for (const OrbitPoint& p : scan.points) {
    e_max = std::max(e_max, std::abs(p.E));
    if (std::abs(p.a) < 1e-12) j0 = p.J;
  }
  bool j_grows = scan.points.front().J > 10.0 * j0 + 10.0 &&
                 scan.points.back().J > 10.0 * j0 + 10.0;
  bool convex = true;
  int argmin = 0;
  for (size_t k = 1; k + 1 < scan.points.size(); ++k) {
    if (scan.points[k + 1].F_eta - 2 * scan.points[k].F_eta +
            scan.points[k - 1].F_eta <=
        0.0)
      convex = false;
    if (scan.points[k].F_eta < scan.points[argmin].F_eta)
      argmin = static_cast<int>(k);
  }
  bool interior_min = argmin > 0 && argmin + 1 < steps;
  // Three independent starts: minimize F_eta over nested windows; the
  // minimizer must agree.
  bool starts_agree = true;
  double ref_arg = 1e300;
  for (double w : {2.5, 5.0, 7.5}) {
    std::vector<double> was;
    for (int k = 0; k < 33; ++k) was.push_back(-w + 2.0 * w * k / 32);
    OrbitScan ws = orbit_scan(m, Vec::Zero(m->nodes()), was);
    int amin = 0;
    for (size_t k = 0; k < ws.points.size(); ++k)
      if (ws.points[k].F_eta < ws.points[amin].F_eta)
        amin = static_cast<int>(k);
    if (amin == 0 || amin + 1 == static_cast<int>(ws.points.size()))
      starts_agree = false;
    double arg = ws.points[amin].a;
    if (ref_arg > 1e299)
      ref_arg = arg;
    else if (std::abs(arg - ref_arg) > 0.5)
      starts_agree = false;
  }
  // Orbit path geodesic residual at the frozen resolution.
  std::vector<double> ts;
  std::vector<Vec> ps;
  const int K = 64;
  for (int k = 0; k <= K; ++k) {
    double t = static_cast<double>(k) / K;
    ts.push_back(t);
    ps.push_back(act(m, -0.04 + 0.08 * t, Vec()).samples);
  }
  double resid = geodesic_residual(path_from_potentials(m, ts, ps));
  // jG / d1G equivalence band, stable under window doubling.
  Model mj = make_model(ModelKind::P1Symmetric, 1024, 32.0);
  Potential tr = act(mj, 1.2, Vec());
  GroupInf j3 = jG(mj, tr.samples, 3.0);
  GroupInf j6 = jG(mj, tr.samples, 6.0);
  GroupInf d3 = d1G(Potential(mj, Vec::Zero(mj->nodes())), tr, 3.0);
  GroupInf d6 = d1G(Potential(mj, Vec::Zero(mj->nodes())), tr, 6.0);
  bool band_ok = j3.interior && d3.interior && std::isfinite(j3.value) &&
                 std::isfinite(d3.value) &&
                 std::abs(j6.value - j3.value) <= 1e-6 &&
                 std::abs(d6.value - d3.value) <= 1e-6;
  bool pass = e_max <= 1e-5 && j_grows && convex && interior_min &&
              starts_agree && resid <= 1e-6 && band_ok;
  report(out, 7, pass,
         "orbit suite (E constancy " + sci(e_max) + " <= 1e-5, J proper: " +
             (j_grows ? "yes" : "no") + ", F_eta convex interior min: " +
             (convex && interior_min && starts_agree ? "yes" : "no") +
             ", orbit residual " + sci(resid) +
             " <= 1e-6, jG/d1G window-doubling stable: " +
             (band_ok ? "yes" : "no") + ")");
}

// -- criterion 8: Moser-Trudinger scan ------------------------------------

void crit8(const GlobalOpts& g, std::vector<Criterion>& out) {
  Model m = make_model(ModelKind::P1Symmetric, 512, 32.0);
  Rng r32(g.seed);
  MTScan s32 = mt_scan(m, 32, 6, 0.5, r32);
  Rng r64(g.seed);
  MTScan s64 = mt_scan(m, 64, 6, 0.5, r64);
  {
    auto os = open_csv(g, "mt.csv");
    os << "J,E\n";
    for (const MTRow& r : s64.rows)
      os << fmt(r.J) << ',' << fmt(r.E) << '\n';
    os << "# slope32 " << fmt(s32.slope) << "\n";
    os << "# slope64 " << fmt(s64.slope) << "\n";
  }
  double mech = 0.0;
  for (double r : s64.mechanism_residuals) mech = std::max(mech, r);
  double rel = std::abs(s64.slope - s32.slope) / s32.slope;
  // Control: along the orbit, E stays flat while J is unbounded -> slope
  // of E against J ~ 0.
  std::vector<double> as;
  for (int k = 0; k < 21; ++k) as.push_back(-6.0 + 12.0 * k / 20);
  OrbitScan orb = orbit_scan(m, Vec::Zero(m->nodes()), as);
  double sj = 0, se = 0, sjj = 0, sje = 0;
  int n = static_cast<int>(orb.points.size());
  for (const OrbitPoint& p : orb.points) {
    sj += p.J;
    se += p.E;
    sjj += p.J * p.J;
    sje += p.J * p.E;
  }
  double ctrl_slope = (n * sje - sj * se) / (n * sjj - sj * sj);
  double j_range = orb.points.front().J - orb.points[n / 2].J;
  // The control slope is limited by the h^2 quadrature error of E along
  // the orbit spread over the J range; require it both small in absolute
  // terms and negligible against the fitted supporting-line slope.
  bool pass = s32.slope > 0.0 && s64.slope > 0.0 && rel <= 0.2 &&
              mech <= 1e-3 && std::abs(ctrl_slope) <= 1e-3 &&
              std::abs(ctrl_slope) <= 1e-4 * s32.slope && j_range > 5.0;
  report(out, 8, pass,
         "MT scan (slope " + sci(s32.slope) + " -> " + sci(s64.slope) +
             " under ray doubling, rel " + sci(rel) +
             " <= 0.2, mechanism residual " + sci(mech) +
             ", orbit control slope " + sci(ctrl_slope) + " ~ 0)");
}

// -- criterion 9: Hormander / alpha suite ----------------------------------

void crit9(const GlobalOpts& g, std::vector<Criterion>& out) {
  HormanderReport h = hormander_check(8, 1.0, 0.55,
                                      static_cast<unsigned>(g.seed) + 35);
  Model m = make_model(ModelKind::P1Symmetric, 2048, 64.0);
  std::vector<double> betas = {0.25, 0.45, 0.6, 0.75, 0.9};
  AlphaScan scan = alpha_scan(m, betas, 14.4, 25);
  {
    auto os = open_csv(g, "alpha.csv");
    os << "beta,rate\n";
    for (const AlphaPoint& p : scan.points)
      os << fmt(p.beta) << ',' << fmt(p.rate) << '\n';
    os << "# alpha_lower " << fmt(scan.alpha_lower) << "\n";
    os << "# hormander_max " << fmt(h.max_integral) << "\n";
    os << "# hormander_ratio " << fmt(h.ratio) << "\n";
  }
  bool mono = true;
  for (size_t k = 1; k < scan.points.size(); ++k)
    if (scan.points[k].rate < scan.points[k - 1].rate - 1e-9) mono = false;
  double worst_asym = 0.0;
  bool sub_ok = true;
  for (const AlphaPoint& p : scan.points) {
    if (p.beta <= 0.45) {
      if (p.rate > 0.05) sub_ok = false;
    } else {
      double expected = 4.0 * p.beta - 2.0;
      worst_asym =
          std::max(worst_asym, std::abs(p.rate - expected) / expected);
    }
  }
  bool pass = h.stable && h.ratio < 2.0 && std::isfinite(h.max_integral) &&
              mono && sub_ok && worst_asym <= 0.05;
  report(out, 9, pass,
         "Hormander/alpha suite (integral bound " + sci(h.max_integral) +
             ", doubling ratio " + sci(h.ratio) + " < 2, rates monotone: " +
             (mono ? "yes" : "no") + ", subcritical flat: " +
             (sub_ok ? "yes" : "no") + ", asymptotics " + sci(worst_asym) +
             " <= 0.05)");
}

// -- criterion 10: determinism ---------------------------------------------

void crit10(const GlobalOpts& g, std::vector<Criterion>& out) {
  // In-process re-run of a seeded sample stream must serialize identically;
  // cross-run byte identity of the CSV artifacts is checked by the harness
  // comparing two invocations with the same seed.
  auto render = [&] {
    Model m = make_model(ModelKind::P1Symmetric, 256, 16.0);
    Rng rng(g.seed);
    std::ostringstream os;
    for (int rep = 0; rep < 50; ++rep) {
      Potential phi = random_admissible(m, rng, 0.3);
      FunctionalReport r = mabuchi(phi);
      os << fmt(r.I) << ',' << fmt(r.E_fano) << '\n';
    }
    return os.str();
  };
  std::string a = render();
  std::string b = render();
  bool pass = a == b;
  report(out, 10, pass,
         std::string("determinism (seeded sample stream byte-identical: ") +
             (pass ? "yes" : "no") +
             "; artifact-level identity via repeated runs)");
}

int run_acceptance(const GlobalOpts& g) {
  std::vector<Criterion> results;
  crit1(g, results);
  crit23(g, results);
  crit4(g, results);
  crit5(g, results);
  crit6(g, results);
  crit7(g, results);
  crit8(g, results);
  crit9(g, results);
  crit10(g, results);
  {
    auto os = open_csv(g, "acceptance_summary.csv");
    os << "criterion,pass,detail\n";
    for (const Criterion& c : results)
      os << c.id << ',' << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
  }
  int failed = 0;
  for (const Criterion& c : results)
    if (!c.pass) ++failed;
  if (failed > 0) {
    std::cout << failed << " criteria failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kahler-lab experiment runner"};
  app.set_config("--config", "", "flat key = value config file; CLI overrides");
  app.allow_config_extras(false);

  GlobalOpts g;
  app.add_option("--model", g.model, "model kind: torus | p1")
      ->check(CLI::IsMember({"torus", "p1"}));
  app.add_option("--N", g.N, "grid resolution");
  app.add_option("--X", g.X, "sphere-model half-width");
  app.add_option("--seed", g.seed, "rng seed, recorded in output headers");
  app.add_option("--jobs", g.jobs, "task parallelism (logs stay sequential)");
  app.add_option("--out", g.out, "output directory");
  app.require_subcommand(1);

  // functionals
  std::string in_snap, csv_out = "functionals.csv";
  auto* sc_fun = app.add_subcommand("functionals", "one FunctionalReport row");
  sc_fun->add_option("--in", in_snap, "input snapshot")->required();
  sc_fun->add_option("--csv", csv_out, "output CSV");

  // continuity
  std::string trace_csv = "trace.csv", snap_dir;
  bool to_ke = true;
  auto* sc_cont = app.add_subcommand("continuity", "continuity-method run");
  sc_cont->add_option("--trace", trace_csv, "trace CSV");
  sc_cont->add_option("--snapshots", snap_dir, "per-node snapshot directory");
  sc_cont->add_flag("--to-ke", to_ke, "run the full schedule to (1,1)");

  // flow
  std::string f_file, flow_csv = "flow.csv";
  double flow_T = 50.0, flow_dt = 0.01;
  auto* sc_flow = app.add_subcommand("flow", "normalized Ricci flow run");
  sc_flow->add_option("--F", f_file, "synthetic F snapshot");
  sc_flow->add_option("--T", flow_T, "final time");
  sc_flow->add_option("--dt", flow_dt, "time step");
  sc_flow->add_option("--trace", flow_csv, "trace CSV");

  // distance / geodesic
  std::string snap_a, snap_b, dist_csv = "distance.csv";
  int geo_K = 64;
  auto* sc_dist = app.add_subcommand("distance", "d1 distance report");
  sc_dist->add_option("--a", snap_a, "first snapshot")->required();
  sc_dist->add_option("--b", snap_b, "second snapshot")->required();
  sc_dist->add_option("--csv", dist_csv, "output CSV");
  auto* sc_geo = app.add_subcommand("geodesic", "Legendre geodesic slices");
  sc_geo->add_option("--a", snap_a, "first snapshot")->required();
  sc_geo->add_option("--b", snap_b, "second snapshot")->required();
  sc_geo->add_option("--K", geo_K, "time slices");

  // orbit / mt-scan / alpha
  std::string eta_file, orbit_csv = "orbit.csv";
  double orbit_window = 4.0;
  int orbit_steps = 201;
  auto* sc_orbit = app.add_subcommand("orbit", "dilation-orbit scan");
  sc_orbit->add_option("--eta", eta_file, "base potential snapshot");
  sc_orbit->add_option("--window", orbit_window, "scan half-width");
  sc_orbit->add_option("--steps", orbit_steps, "scan points");
  sc_orbit->add_option("--csv", orbit_csv, "output CSV");

  int mt_rays = 32, mt_steps = 6;
  double mt_step = 0.5;
  std::string mt_csv = "mt.csv";
  auto* sc_mt = app.add_subcommand("mt-scan", "Moser-Trudinger ray scan");
  sc_mt->add_option("--rays", mt_rays, "ray count");
  sc_mt->add_option("--steps", mt_steps, "steps per ray");
  sc_mt->add_option("--step", mt_step, "ray step size");
  sc_mt->add_option("--csv", mt_csv, "output CSV");

  std::string beta_spec = "0.25,0.45,0.6,0.75,0.9", alpha_csv = "alpha.csv";
  double alpha_amax = 7.2;
  int alpha_na = 25;
  auto* sc_alpha = app.add_subcommand("alpha", "tilt-decay rate scan");
  sc_alpha->add_option("--beta", beta_spec, "betas: lo:step:hi or comma list");
  sc_alpha->add_option("--amax", alpha_amax, "largest tilt center");
  sc_alpha->add_option("--na", alpha_na, "tilt samples per beta");
  sc_alpha->add_option("--csv", alpha_csv, "output CSV");

  auto* sc_acc = app.add_subcommand("acceptance", "full acceptance suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  // canonical config string for the provenance hash
  {
    std::ostringstream cs;
    cs << g.model << '|' << g.N << '|' << g.X << '|' << g.seed << '|'
       << g.jobs;
    for (const auto* sc : app.get_subcommands()) cs << '|' << sc->get_name();
    cs << '|' << in_snap << '|' << trace_csv << '|' << snap_dir << '|'
       << f_file << '|' << flow_T << '|' << flow_dt << '|' << snap_a << '|'
       << snap_b << '|' << geo_K << '|' << eta_file << '|' << orbit_window
       << '|' << orbit_steps << '|' << mt_rays << '|' << mt_steps << '|'
       << mt_step << '|' << beta_spec << '|' << alpha_amax << '|' << alpha_na;
    g.config_string = cs.str();
  }

  try {
    if (sc_fun->parsed()) return run_functionals(g, in_snap, csv_out);
    if (sc_cont->parsed()) return run_continuity(g, trace_csv, snap_dir);
    if (sc_flow->parsed()) return run_flow(g, f_file, flow_T, flow_dt, flow_csv);
    if (sc_dist->parsed()) return run_distance(g, snap_a, snap_b, dist_csv);
    if (sc_geo->parsed()) return run_geodesic(g, snap_a, snap_b, geo_K);
    if (sc_orbit->parsed())
      return run_orbit(g, eta_file, orbit_window, orbit_steps, orbit_csv);
    if (sc_mt->parsed()) return run_mt_scan(g, mt_rays, mt_steps, mt_step, mt_csv);
    if (sc_alpha->parsed())
      return run_alpha(g, beta_spec, alpha_amax, alpha_na, alpha_csv);
    if (sc_acc->parsed()) return run_acceptance(g);
  } catch (const NonConvergence& e) {
    std::cerr << "nonconvergence: " << e.what() << std::endl;
    return 3;
  } catch (const PositivityLoss& e) {
    std::cerr << "nonconvergence: " << e.what() << std::endl;
    return 3;
  } catch (const TruncationExceeded& e) {
    std::cerr << "truncation: " << e.what() << std::endl;
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
