#pragma once

#include <span>
#include <vector>

#include "tdoa_assoc/geometry.hpp"
#include "tdoa_assoc/scene.hpp"
#include "tdoa_assoc/transport.hpp"

namespace tdoa_assoc {

struct RefineConfig {
  int max_evals = 2000;
  double xtol = 1e-9;   // meters
  double ftol = 1e-12;
};

struct RefineOutcome {
  Point3 position;
  double objective = 0.0;  // sum of squared TDOA mismatches at position
  bool refined = false;    // false when fewer than 3 measurements were given
  bool converged = false;
};

struct ReassociationResult {
  AssociationResult assoc;   // assign values index the selected list / kVoid
  SinkhornDiagnostics diag;  // carries the solver non-convergence flag
};

/// Re-runs the transport association with the candidate set restricted to
/// the selected positions; the void cost is recomputed from the restricted
/// cost matrix.
ReassociationResult reassociate(const MeasurementSet& ms, std::span<const Point3> selected,
                                std::span<const Point3> receivers, const SolverConfig& cfg);

/// Local nonlinear refinement of one source position against its assigned
/// measurements (damped Gauss-Newton). The returned objective never exceeds
/// the objective at x0. Fewer than 3 measurements returns x0 flagged
/// unrefined.
RefineOutcome refine_position(const Point3& x0, std::span<const TdoaMeasurement> assigned,
                              std::span<const Point3> receivers, const RefineConfig& rc = {});

}  // namespace tdoa_assoc
