#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "tdoa_assoc/pipeline.hpp"

using namespace tdoa_assoc;

TEST_CASE("canonical ordering sorts by pair then value") {
  MeasurementSet ms;
  ms.measurements.push_back({{1, 2}, 0.7, 0});
  ms.measurements.push_back({{0, 1}, 0.9, 1});
  ms.measurements.push_back({{0, 1}, -0.5, 0});
  ms.measurements.push_back({{0, 2}, 0.1, 1});
  const MeasurementSet sorted = canonical_order(ms);
  CHECK(sorted.measurements[0].pair == ReceiverPair{0, 1});
  CHECK(sorted.measurements[0].value == -0.5);
  CHECK(sorted.measurements[1].value == 0.9);
  CHECK(sorted.measurements[2].pair == ReceiverPair{0, 2});
  CHECK(sorted.measurements[3].pair == ReceiverPair{1, 2});
}

TEST_CASE("noiseless localization is exact with a perfect association") {
  Rng rng(101);
  for (int rep = 0; rep < 5; ++rep) {
    const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
    const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
    PipelineConfig cfg;
    cfg.sigma = 0.0;
    Rng lrng(derive_seed(7, rep, 0));
    const LocalizeResult res = localize(ms, scene.receivers, cfg, lrng);
    REQUIRE(res.ok);
    REQUIRE(res.estimates.size() == 3);
    const Metrics metrics = evaluate(res.estimates, res.assoc, scene, ms);
    CHECK(metrics.mean_error < 1e-6);
    CHECK(metrics.association_rate == doctest::Approx(1.0));
    CHECK(std::isnan(metrics.false_to_void_rate));
  }
}

TEST_CASE("localization is deterministic for a fixed seed") {
  Rng rng(103);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.03}, rng);
  ms = inject_false(std::move(ms), 6, rng);
  PipelineConfig cfg;
  cfg.sigma = 0.03;
  Rng a(5), b(5);
  const LocalizeResult ra = localize(ms, scene.receivers, cfg, a);
  const LocalizeResult rb = localize(ms, scene.receivers, cfg, b);
  REQUIRE(ra.ok);
  REQUIRE(rb.ok);
  for (std::size_t s = 0; s < ra.estimates.size(); ++s) CHECK(ra.estimates[s] == rb.estimates[s]);
  CHECK(ra.assoc.assign == rb.assoc.assign);
}

TEST_CASE("localization is invariant to the input measurement order") {
  Rng rng(107);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.02}, rng);
  MeasurementSet shuffled = ms;
  // deterministic shuffle
  Rng shuffle_rng(1);
  for (std::size_t i = shuffled.measurements.size(); i > 1; --i)
    std::swap(shuffled.measurements[i - 1],
              shuffled.measurements[shuffle_rng.uniform_index(i)]);

  PipelineConfig cfg;
  cfg.sigma = 0.02;
  Rng a(9), b(9);
  const LocalizeResult ra = localize(ms, scene.receivers, cfg, a);
  const LocalizeResult rb = localize(shuffled, scene.receivers, cfg, b);
  REQUIRE(ra.ok);
  REQUIRE(rb.ok);
  for (std::size_t s = 0; s < ra.estimates.size(); ++s) CHECK(ra.estimates[s] == rb.estimates[s]);
  const Metrics ma = evaluate(ra.estimates, ra.assoc, scene, ms);
  const Metrics mb = evaluate(rb.estimates, rb.assoc, scene, shuffled);
  CHECK(ma.association_rate == mb.association_rate);
}

TEST_CASE("evaluate matches estimates to truth over permutations") {
  Scene scene;
  scene.receivers = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 2}};
  scene.sources = {{1, 1, 1}, {8, 2, 0.5}, {3, 9, 1.5}};
  Rng rng(1);
  const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);

  // permuted perfect estimates give zero error regardless of assignment
  const std::vector<Point3> permuted = {scene.sources[2], scene.sources[0], scene.sources[1]};
  AssociationResult assoc;
  assoc.assign.assign(static_cast<std::size_t>(ms.size()), kVoid);
  const Metrics metrics = evaluate(permuted, assoc, scene, ms);
  CHECK(metrics.mean_error == doctest::Approx(0.0));
  CHECK(metrics.association_rate == doctest::Approx(0.0));  // everything voided is wrong
}

TEST_CASE("association rate counts truth hits and false-to-void hits") {
  Scene scene;
  scene.receivers = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 2}};
  scene.sources = {{2, 2, 1}, {7, 6, 1}};
  MeasurementSet ms;
  // five hand-built rows: three true (sources 0, 0, 1), two false
  ms.measurements.push_back({{0, 1}, tdoa(scene.sources[0], scene.receivers[0], scene.receivers[1]), 0});
  ms.measurements.push_back({{0, 2}, tdoa(scene.sources[0], scene.receivers[0], scene.receivers[2]), 0});
  ms.measurements.push_back({{0, 1}, tdoa(scene.sources[1], scene.receivers[0], scene.receivers[1]), 1});
  ms.measurements.push_back({{1, 2}, 0.33, kFalseMeasurement});
  ms.measurements.push_back({{2, 3}, -0.21, kFalseMeasurement});

  const MeasurementSet canon = canonical_order(ms);
  // estimates in source order; craft the assignment against canonical rows
  const std::vector<Point3> estimates = {scene.sources[0], scene.sources[1]};
  AssociationResult assoc;
  assoc.assign.resize(5);
  int correct = 0;
  for (int i = 0; i < canon.size(); ++i) {
    const int truth = *canon.measurements[static_cast<std::size_t>(i)].truth;
    if (truth == 0) {
      assoc.assign[static_cast<std::size_t>(i)] = 0;  // right
      ++correct;
    } else if (truth == 1) {
      assoc.assign[static_cast<std::size_t>(i)] = kVoid;  // wrong: true row voided
    } else {
      assoc.assign[static_cast<std::size_t>(i)] = kVoid;  // right: false row voided
      ++correct;
    }
  }
  const Metrics metrics = evaluate(estimates, assoc, scene, ms);
  CHECK(metrics.association_rate == doctest::Approx(correct / 5.0));
  CHECK(metrics.false_to_void_rate == doctest::Approx(1.0));
}

TEST_CASE("evaluate rejects unlabeled measurements") {
  Scene scene;
  scene.receivers = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 2}};
  scene.sources = {{2, 2, 1}};
  MeasurementSet ms;
  ms.measurements.push_back({{0, 1}, 0.4, std::nullopt});
  AssociationResult assoc;
  assoc.assign = {kVoid};
  CHECK_THROWS_AS(evaluate({scene.sources[0]}, assoc, scene, ms), std::invalid_argument);
}

TEST_CASE("noisy localization with false rows still produces three estimates") {
  Rng rng(109);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.03}, rng);
  ms = inject_false(std::move(ms), 10, rng);
  PipelineConfig cfg;
  cfg.sigma = 0.03;
  Rng lrng(11);
  const LocalizeResult res = localize(ms, scene.receivers, cfg, lrng);
  REQUIRE(res.ok);
  CHECK(res.estimates.size() == 3);
  CHECK(res.selected_positions.size() == 3);
  const Metrics metrics = evaluate(res.estimates, res.assoc, scene, ms);
  CHECK(metrics.mean_error < 1.0);
  CHECK(metrics.association_rate > 0.6);
  CHECK(metrics.false_to_void_rate >= 0.0);
}

TEST_CASE("empty and undersized inputs are rejected") {
  PipelineConfig cfg;
  Rng rng(1);
  MeasurementSet empty;
  const std::vector<Point3> receivers = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  CHECK_THROWS_AS(localize(empty, receivers, cfg, rng), std::invalid_argument);
  MeasurementSet one;
  one.measurements.push_back({{0, 1}, 0.1, 0});
  const std::vector<Point3> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(localize(one, three, cfg, rng), std::invalid_argument);
}
