#pragma once

#include <stdexcept>
#include <string>

namespace klab {

/// Base class for all kahler-lab errors so callers can catch library
/// failures without swallowing std::bad_alloc and friends.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Newton iteration cap reached without meeting the residual tolerance.
struct NonConvergence : Error {
  using Error::Error;
};

/// A damped Newton step could not stay inside the admissible cone
/// (Monge-Ampere density > 0) after the backtracking cap.
struct PositivityLoss : Error {
  using Error::Error;
};

/// s = 0 solve requested without a normalization rule.
struct NormalizationAmbiguity : Error {
  using Error::Error;
};

/// Continuity-method warm start diverged even after bisection.
struct StepTooLarge : Error {
  using Error::Error;
};

/// Group action or orbit scan hit the truncation window.
struct TruncationExceeded : Error {
  using Error::Error;
};

/// Legendre/envelope data degenerate beyond tolerance (e.g. a torus
/// geodesic requested for endpoints without a symmetric representation).
struct ConvexificationFailure : Error {
  using Error::Error;
};

/// Two potentials passed to a binary operation live on different models.
struct ModelMismatch : Error {
  using Error::Error;
};

/// Snapshot descriptor does not match the requested model.
struct SnapshotMismatch : Error {
  using Error::Error;
};

}  // namespace klab
