#pragma once

#include <optional>
#include <string>
#include <utility>

#include "json.hpp"
#include "tdoa_assoc/multilateration.hpp"
#include "tdoa_assoc/pipeline.hpp"
#include "tdoa_assoc/scene.hpp"

namespace tdoa_assoc {

/// Scene + measurements document:
/// {receivers: [[x,y,z]...], sources: [[x,y,z]...], rho,
///  measurements: [{k, l, value, truth?}...]}
/// Field order is fixed as listed; truth is the source index or -1 for an
/// injected false measurement, and is omitted for unlabeled data.
nlohmann::ordered_json scene_to_json(const Scene& scene, const MeasurementSet& ms);
std::pair<Scene, MeasurementSet> scene_from_json(const nlohmann::json& j);

/// Candidate set: [{x, y, z, set_id, tuple, residual}...]
nlohmann::ordered_json candidates_to_json(const CandidateSet& candidates);

/// Per-solve diagnostic dump: iterations, residuals, objective values, the
/// recorded traces (when the solve ran with record_trace) and the selected
/// columns when a selection is supplied.
nlohmann::ordered_json solver_diagnostics_to_json(const SinkhornDiagnostics& diag,
                                                  const AssociationResult* selection = nullptr);

/// Localization result: {estimates, assignment, metrics, diagnostics};
/// metrics is null when ground truth was unavailable.
nlohmann::ordered_json result_to_json(const LocalizeResult& result,
                                      const std::optional<Metrics>& metrics);

}  // namespace tdoa_assoc
