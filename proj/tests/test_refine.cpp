#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tdoa_assoc/refine.hpp"
#include "tdoa_assoc/scene.hpp"

using namespace tdoa_assoc;

namespace {

std::vector<TdoaMeasurement> measurements_for(const Point3& source,
                                              const std::vector<Point3>& receivers,
                                              double sigma, Rng& rng) {
  std::vector<TdoaMeasurement> out;
  for (const ReceiverPair& p : all_receiver_pairs(static_cast<int>(receivers.size()))) {
    const double clean = tdoa(source, receivers[static_cast<std::size_t>(p.k)],
                              receivers[static_cast<std::size_t>(p.l)]);
    out.push_back({p, clean + sigma * rng.normal(), 0});
  }
  return out;
}

double objective(const Point3& x, const std::vector<TdoaMeasurement>& ms,
                 const std::vector<Point3>& receivers) {
  double obj = 0.0;
  for (const TdoaMeasurement& m : ms)
    obj += ground_cost(x, m.value, m.pair, receivers);
  return obj;
}

}  // namespace

TEST_CASE("refinement keeps an exact starting point") {
  Rng rng(13);
  const Scene scene = generate_scene(10, 1, {10, 10, 2}, rng);
  const auto ms = measurements_for(scene.sources[0], scene.receivers, 0.0, rng);
  const RefineOutcome out = refine_position(scene.sources[0], ms, scene.receivers);
  CHECK(out.refined);
  CHECK(distance(out.position, scene.sources[0]) < 1e-9);
  CHECK(out.objective <= 1e-18);
}

TEST_CASE("refinement recovers a perturbed noiseless source") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Scene scene = generate_scene(10, 1, {10, 10, 2}, rng);
    const auto ms = measurements_for(scene.sources[0], scene.receivers, 0.0, rng);
    const Point3 start = scene.sources[0] + Point3{rng.uniform(-0.1, 0.1) * 0.577,
                                                   rng.uniform(-0.1, 0.1) * 0.577,
                                                   rng.uniform(-0.1, 0.1) * 0.577};
    const RefineOutcome out = refine_position(start, ms, scene.receivers);
    CHECK(distance(out.position, scene.sources[0]) < 1e-6);
  }
}

TEST_CASE("refinement never increases the objective") {
  Rng rng(19);
  for (int rep = 0; rep < 30; ++rep) {
    const Scene scene = generate_scene(8, 1, {10, 10, 2}, rng);
    const auto ms = measurements_for(scene.sources[0], scene.receivers, 0.05, rng);
    const Point3 start{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 2)};
    const RefineOutcome out = refine_position(start, ms, scene.receivers);
    CHECK(out.objective <= objective(start, ms, scene.receivers) + 1e-12);
  }
}

TEST_CASE("fewer than three measurements returns the start flagged") {
  const std::vector<Point3> receivers = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<TdoaMeasurement> two = {{{0, 1}, 0.1, 0}, {{1, 2}, -0.2, 0}};
  const Point3 start{2, 2, 1};
  const RefineOutcome out = refine_position(start, two, receivers);
  CHECK_FALSE(out.refined);
  CHECK(out.position == start);
}

TEST_CASE("refinement escapes the mirror-side basin") {
  // receivers nearly coplanar: the reflected start is a strong local
  // minimum; the search must still land at the true source
  Rng rng(23);
  std::vector<Point3> receivers;
  for (int i = 0; i < 10; ++i)
    receivers.push_back({rng.uniform(0, 10), rng.uniform(0, 10), 1.0 + rng.uniform(-0.05, 0.05)});
  const Point3 source{4.0, 6.0, 0.3};
  Rng noise(29);
  const auto ms = measurements_for(source, receivers, 0.0, noise);
  const Point3 mirror_start{4.0, 6.0, 1.7};
  const RefineOutcome out = refine_position(mirror_start, ms, receivers);
  CHECK(distance(out.position, source) < 1e-5);
}

TEST_CASE("reassociation against the true sources restores the labels") {
  Rng rng(31);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
  SolverConfig cfg;
  cfg.R_tilde = pair_count(12);
  const ReassociationResult re = reassociate(ms, scene.sources, scene.receivers, cfg);
  CHECK(re.diag.converged);
  for (int i = 0; i < ms.size(); ++i) {
    const int truth = *ms.measurements[static_cast<std::size_t>(i)].truth;
    CHECK(re.assoc.assign[static_cast<std::size_t>(i)] == truth);
  }
}

TEST_CASE("a wildly inconsistent measurement lands in the void") {
  Rng rng(37);
  const Scene scene = generate_scene(12, 2, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.01}, rng);
  // a false TDOA far from every candidate hyperboloid: beyond any plausible
  // range for its pair
  TdoaMeasurement rogue;
  rogue.pair = {0, 1};
  rogue.value = distance(scene.receivers[0], scene.receivers[1]) * 0.99;
  rogue.truth = kFalseMeasurement;
  // only keep it plausible-in-range if the pair's true values allow; push it
  // to the extreme end of the baseline instead
  ms.measurements.push_back(rogue);
  SolverConfig cfg;
  cfg.R_tilde = pair_count(12);
  const ReassociationResult re = reassociate(ms, scene.sources, scene.receivers, cfg);
  const int rogue_row = ms.size() - 1;
  const double cost0 = ground_cost(scene.sources[0], rogue.value, rogue.pair, scene.receivers);
  const double cost1 = ground_cost(scene.sources[1], rogue.value, rogue.pair, scene.receivers);
  if (std::min(cost0, cost1) > 1.0)  // genuinely far from both hyperboloids
    CHECK(re.assoc.assign[static_cast<std::size_t>(rogue_row)] == kVoid);
}

TEST_CASE("restriction to a single candidate splits rows by cost") {
  Rng rng(41);
  const Scene scene = generate_scene(10, 2, {10, 10, 2}, rng);
  const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
  const std::vector<Point3> only = {scene.sources[0]};
  SolverConfig cfg;
  cfg.R_tilde = pair_count(10);
  const ReassociationResult re = reassociate(ms, only, scene.receivers, cfg);
  // rows of source 0 fit exactly; rows of source 1 pay their mismatch or the
  // void, whichever is cheaper at the optimum
  int source0_kept = 0;
  for (int i = 0; i < ms.size(); ++i) {
    if (*ms.measurements[static_cast<std::size_t>(i)].truth == 0) {
      CHECK(re.assoc.assign[static_cast<std::size_t>(i)] == 0);
      ++source0_kept;
    }
  }
  CHECK(source0_kept == pair_count(10));
}
