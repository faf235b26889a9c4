#include "klab/snapshot.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace klab {

namespace {

const char* kind_name(ModelKind k) {
  return k == ModelKind::Torus2 ? "torus" : "p1";
}

struct Descriptor {
  std::string kind;
  int N = 0;
  double X = 0.0, mu = 0.0, V = 0.0;
};

Descriptor read_header(std::istream& in, const std::string& path) {
  std::string magic;
  if (!std::getline(in, magic) || magic != "KLAB1")
    throw SnapshotMismatch(path + ": not a KLAB1 snapshot");
  std::string line;
  if (!std::getline(in, line))
    throw SnapshotMismatch(path + ": missing descriptor line");
  std::istringstream ss(line);
  Descriptor d;
  if (!(ss >> d.kind >> d.N >> d.X >> d.mu >> d.V))
    throw SnapshotMismatch(path + ": malformed descriptor");
  return d;
}

}  // namespace

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_snapshot(const std::string& path, const Potential& phi) {
  const ModelGeometry& m = *phi.model;
  if (!m.standard_reference)
    throw SnapshotMismatch(
        "snapshots store samples relative to a standard reference only");
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "KLAB1\n"
      << kind_name(m.kind) << ' ' << m.N << ' ' << format_full(m.X) << ' '
      << format_full(m.mu) << ' ' << format_full(m.volume) << '\n';
  for (int i = 0; i < m.nodes(); ++i)
    out << format_full(phi.samples[i]) << '\n';
  if (!out) throw Error("write failed: " + path);
}

static Vec read_samples(std::istream& in, int n, const std::string& path) {
  Vec v(n);
  std::string line;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw SnapshotMismatch(path + ": truncated sample block");
    v[i] = std::stod(line);
  }
  return v;
}

Potential load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  Descriptor d = read_header(in, path);
  ModelKind kind;
  if (d.kind == "torus")
    kind = ModelKind::Torus2;
  else if (d.kind == "p1")
    kind = ModelKind::P1Symmetric;
  else
    throw SnapshotMismatch(path + ": unknown model kind '" + d.kind + "'");
  ModelOptions opts;
  opts.mu_override = d.mu;
  Model m = kind == ModelKind::Torus2
                ? make_model(kind, d.N, 12.0, opts)
                : make_model(kind, d.N, d.X, opts);
  if (std::abs(m->volume - d.V) > 1e-9 * std::max(1.0, std::abs(d.V)))
    throw SnapshotMismatch(path + ": descriptor volume mismatch");
  return Potential(m, read_samples(in, m->nodes(), path));
}

Vec load_field(const std::string& path, const Model& m) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  Descriptor d = read_header(in, path);
  if (d.kind != kind_name(m->kind) || d.N != m->N ||
      std::abs(d.X - m->X) > 1e-12 || std::abs(d.mu - m->mu) > 1e-12)
    throw SnapshotMismatch(path + ": descriptor does not match the model");
  return read_samples(in, m->nodes(), path);
}

}  // namespace klab
