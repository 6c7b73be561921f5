#include "tdoa_assoc/serialize.hpp"

#include <cmath>
#include <stdexcept>

namespace tdoa_assoc {

namespace {

nlohmann::ordered_json point_to_json(const Point3& p) {
  return nlohmann::ordered_json::array({p.x, p.y, p.z});
}

Point3 point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
  return Point3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

double json_or_nan(double v) { return v; }

}  // namespace

nlohmann::ordered_json scene_to_json(const Scene& scene, const MeasurementSet& ms) {
  nlohmann::ordered_json j;
  j["receivers"] = nlohmann::ordered_json::array();
  for (const Point3& r : scene.receivers) j["receivers"].push_back(point_to_json(r));
  j["sources"] = nlohmann::ordered_json::array();
  for (const Point3& s : scene.sources) j["sources"].push_back(point_to_json(s));
  j["rho"] = scene.rho;
  j["measurements"] = nlohmann::ordered_json::array();
  for (const TdoaMeasurement& m : ms.measurements) {
    nlohmann::ordered_json e;
    e["k"] = m.pair.k;
    e["l"] = m.pair.l;
    e["value"] = m.value;
    if (m.truth.has_value()) e["truth"] = *m.truth;
    j["measurements"].push_back(std::move(e));
  }
  return j;
}

std::pair<Scene, MeasurementSet> scene_from_json(const nlohmann::json& j) {
  Scene scene;
  MeasurementSet ms;
  if (!j.contains("receivers") || !j.contains("measurements"))
    throw std::invalid_argument("scene document requires 'receivers' and 'measurements'");
  for (const auto& r : j.at("receivers")) scene.receivers.push_back(point_from_json(r));
  if (j.contains("sources"))
    for (const auto& s : j.at("sources")) scene.sources.push_back(point_from_json(s));
  scene.rho = j.value("rho", 1.0);
  for (const auto& e : j.at("measurements")) {
    TdoaMeasurement m;
    m.pair = make_receiver_pair(e.at("k").get<int>(), e.at("l").get<int>());
    if (m.pair.l >= static_cast<int>(scene.receivers.size()))
      throw std::invalid_argument("measurement references unknown receiver");
    m.value = e.at("value").get<double>();
    if (e.contains("truth")) m.truth = e.at("truth").get<int>();
    ms.measurements.push_back(std::move(m));
  }
  return {std::move(scene), std::move(ms)};
}

nlohmann::ordered_json candidates_to_json(const CandidateSet& candidates) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const Candidate& c : candidates.candidates) {
    nlohmann::ordered_json e;
    e["x"] = c.position.x;
    e["y"] = c.position.y;
    e["z"] = c.position.z;
    e["set_id"] = c.set_id;
    e["tuple"] = c.tuple;
    e["residual"] = c.residual;
    j.push_back(std::move(e));
  }
  return j;
}

nlohmann::ordered_json solver_diagnostics_to_json(const SinkhornDiagnostics& diag,
                                                  const AssociationResult* selection) {
  nlohmann::ordered_json j;
  j["iterations"] = diag.iterations;
  j["residual"] = diag.residual;
  j["residual_floor"] = diag.residual_floor;
  j["converged"] = diag.converged;
  j["primal"] = diag.primal;
  j["dual"] = diag.dual;
  nlohmann::ordered_json stages = nlohmann::ordered_json::array();
  for (const SinkhornStageInfo& s : diag.stages) {
    nlohmann::ordered_json e;
    e["epsilon"] = s.epsilon;
    e["iterations"] = s.iterations;
    e["residual"] = s.residual;
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  j["residual_trace"] = diag.residual_trace;
  j["objective_trace"] = diag.dual_value_trace;
  if (selection != nullptr) {
    j["selected"] = selection->selected;
    j["scores"] = selection->scores;
  }
  return j;
}

nlohmann::ordered_json result_to_json(const LocalizeResult& result,
                                      const std::optional<Metrics>& metrics) {
  nlohmann::ordered_json j;
  j["estimates"] = nlohmann::ordered_json::array();
  for (const Point3& p : result.estimates) j["estimates"].push_back(point_to_json(p));
  j["assignment"] = result.assoc.assign;

  if (metrics.has_value()) {
    nlohmann::ordered_json m;
    m["source_errors"] = metrics->source_errors;
    m["mean_error"] = metrics->mean_error;
    m["association_rate"] = metrics->association_rate;
    if (std::isnan(metrics->false_to_void_rate))
      m["false_to_void_rate"] = nullptr;
    else
      m["false_to_void_rate"] = json_or_nan(metrics->false_to_void_rate);
    m["retries"] = result.diag.retries;
    j["metrics"] = std::move(m);
  } else {
    j["metrics"] = nullptr;
  }

  nlohmann::ordered_json d;
  d["ok"] = result.ok;
  d["failure"] = result.diag.failure;
  d["retries"] = result.diag.retries;
  d["candidate_count"] = result.diag.candidate_count;
  d["skipped_sets"] = result.diag.skipped_sets;
  d["accept_tol"] = result.diag.accept_tol;
  d["min_set_crlb"] = std::isfinite(result.diag.min_set_crlb)
                          ? nlohmann::ordered_json(result.diag.min_set_crlb)
                          : nlohmann::ordered_json(nullptr);
  d["crlb_screen_exhausted"] = result.diag.crlb_screen_exhausted;
  nlohmann::ordered_json unrefined = nlohmann::ordered_json::array();
  for (const Point3& p : result.selected_positions) unrefined.push_back(point_to_json(p));
  d["unrefined"] = std::move(unrefined);
  auto solver_diag = [](const SinkhornDiagnostics& s) {
    nlohmann::ordered_json o;
    o["iterations"] = s.iterations;
    o["residual"] = s.residual;
    o["converged"] = s.converged;
    o["primal"] = s.primal;
    o["dual"] = s.dual;
    return o;
  };
  d["association"] = solver_diag(result.diag.association);
  d["reassociation"] = solver_diag(result.diag.reassociation);
  j["diagnostics"] = std::move(d);
  return j;
}

}  // namespace tdoa_assoc
