#pragma once

#include <string>
#include <vector>

#include "tdoa_assoc/crlb.hpp"
#include "tdoa_assoc/multilateration.hpp"
#include "tdoa_assoc/refine.hpp"
#include "tdoa_assoc/rng.hpp"
#include "tdoa_assoc/scene.hpp"
#include "tdoa_assoc/transport.hpp"

namespace tdoa_assoc {

struct PipelineConfig {
  int S = 3;
  int K = 3;
  int P = 3;
  double sigma = 0.03;  // assumed noise level, drives accept_tol and the CRLB screen
  SolverConfig solver;
  RefineConfig refine;
  MlatConfig mlat;                    // accept_tol is derived from sigma
  double crlb_retry_threshold = 20.0; // meters
  int max_retries = 5;
  bool parallel = true;
};

struct LocalizeDiagnostics {
  bool ok = false;
  std::string failure;         // empty on success
  int retries = 0;             // extra index-set draws used
  bool crlb_screen_exhausted = false;
  int candidate_count = 0;
  std::vector<int> skipped_sets;
  double accept_tol = 0.0;
  double min_set_crlb = 0.0;   // best minimal-set root-CRLB over index sets
  SinkhornDiagnostics association;
  SinkhornDiagnostics reassociation;
  std::vector<bool> refine_converged;
};

struct LocalizeResult {
  bool ok = false;
  std::vector<Point3> estimates;           // refined, S entries on success
  std::vector<Point3> selected_positions;  // multilateration-only estimates
  // per canonical row: slot into estimates (0..S-1) or kVoid
  AssociationResult assoc;
  LocalizeDiagnostics diag;
};

struct Metrics {
  std::vector<double> source_errors;  // per estimate slot, meters
  std::vector<int> matched_source;    // true source index matched to each slot
  double mean_error = 0.0;
  double association_rate = 0.0;
  double false_to_void_rate = 0.0;  // NaN when no false measurements exist
  int retries = 0;
  std::string solver_summary;
};

/// Measurements sorted by (k, l, value) with a stable tie-break, so row
/// indices are reproducible no matter how the input list was ordered.
MeasurementSet canonical_order(const MeasurementSet& ms);

/// Full localization: index-set choice, candidate construction, transport
/// association, reassociation against the selected candidates, and
/// per-source refinement. Index sets whose minimal-set root-CRLB exceeds the
/// threshold at every found candidate trigger a redraw, up to max_retries.
LocalizeResult localize(const MeasurementSet& ms, const std::vector<Point3>& receivers,
                        const PipelineConfig& cfg, Rng& rng);

/// Matches estimates to ground-truth sources by minimum total distance over
/// all permutations and scores the association: a labeled measurement is
/// correct when assigned to the estimate matched to its source, a false one
/// when assigned to the void.
Metrics evaluate(const std::vector<Point3>& estimates, const AssociationResult& assoc,
                 const Scene& scene, const MeasurementSet& ms);

}  // namespace tdoa_assoc
