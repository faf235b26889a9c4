#pragma once

#include <string>

#include "klab/model.hpp"

namespace klab {

/// KLAB1 snapshot format: header line "KLAB1", descriptor line
/// "kind N X mu V" (kind: torus | p1), then one sample per line in
/// row-major order, 17 significant digits.
void save_snapshot(const std::string& path, const Potential& phi);

/// Load a snapshot, building the model from the descriptor. Only standard
/// reference models round-trip; mu differing from the model default is
/// applied as an override.
Potential load_snapshot(const std::string& path);

/// Load a snapshot's samples onto an existing model; the descriptor must
/// match (kind, N, X, mu) or SnapshotMismatch is thrown. Used for synthetic
/// F fields and warm starts on already-built models.
Vec load_field(const std::string& path, const Model& m);

/// 17-significant-digit formatting used by all file outputs (snapshots and
/// CSV traces), so reruns are byte-identical.
std::string format_full(double v);

}  // namespace klab
