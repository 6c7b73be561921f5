#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "tdoa_assoc/multilateration.hpp"
#include "tdoa_assoc/scene.hpp"

using namespace tdoa_assoc;

namespace {

std::vector<double> forward_tdoas(const Point3& source, const PairIndexSet& set,
                                  const std::vector<Point3>& receivers) {
  std::vector<double> values;
  for (const ReceiverPair& p : set.pairs)
    values.push_back(tdoa(source, receivers[static_cast<std::size_t>(p.k)],
                          receivers[static_cast<std::size_t>(p.l)]));
  return values;
}

}  // namespace

TEST_CASE("choose_pair_sets honors the constraints") {
  Rng rng(5);
  const auto sets = choose_pair_sets(12, 3, 3, rng);
  REQUIRE(sets.size() == 3);
  std::set<std::pair<int, int>> used;
  for (const PairIndexSet& s : sets) {
    REQUIRE(s.pairs.size() == 3);
    std::set<int> ids;
    for (const ReceiverPair& p : s.pairs) {
      CHECK(used.insert({p.k, p.l}).second);  // no pair reused
      ids.insert(p.k);
      ids.insert(p.l);
    }
    CHECK(ids.size() >= 4);
  }
  CHECK(used.size() == 9);

  Rng rng2(5);
  const auto again = choose_pair_sets(12, 3, 3, rng2);
  for (std::size_t i = 0; i < sets.size(); ++i) CHECK(sets[i].pairs == again[i].pairs);

  // R=4, K=1, P=3 is feasible
  Rng rng3(8);
  const auto small = choose_pair_sets(4, 1, 3, rng3);
  std::set<int> ids;
  for (const ReceiverPair& p : small[0].pairs) {
    ids.insert(p.k);
    ids.insert(p.l);
  }
  CHECK(ids.size() == 4);

  Rng rng4(1);
  CHECK_THROWS_AS(choose_pair_sets(4, 3, 3, rng4), std::invalid_argument);  // 6 pairs < 9
}

TEST_CASE("solve_minimal recovers a noiseless source") {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const Scene scene = generate_scene(12, 1, {10, 10, 2}, rng);
    const auto sets = choose_pair_sets(12, 1, 3, rng);
    const auto values = forward_tdoas(scene.sources[0], sets[0], scene.receivers);
    const auto roots = solve_minimal(sets[0], values, scene.receivers);
    REQUIRE(!roots.empty());
    double best = 1e300;
    for (const Point3& r : roots) best = std::min(best, distance(r, scene.sources[0]));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("solve_minimal rejects infeasible hyperbola branches") {
  const std::vector<Point3> receivers = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  PairIndexSet set;
  set.pairs = {{0, 1}, {0, 2}, {0, 3}};
  const std::vector<double> impossible = {1.5, 0.2, 0.1};  // |d| > baseline of pair (0,1)
  CHECK(solve_minimal(set, impossible, receivers).empty());
}

TEST_CASE("solve_minimal finds both mirror roots for coplanar receivers") {
  // six receivers in the z=1 plane; the geometry cannot distinguish z=1+d
  // from z=1-d
  const std::vector<Point3> receivers = {{0, 0, 1}, {9, 1, 1},  {2, 8, 1},
                                         {7, 7, 1}, {4, 0.5, 1}, {0.5, 5, 1}};
  PairIndexSet set;
  set.pairs = {{0, 1}, {2, 3}, {4, 5}};
  const Point3 source{4.0, 3.5, 1.8};
  const auto values = forward_tdoas(source, set, receivers);
  const auto roots = solve_minimal(set, values, receivers);
  const Point3 mirrored{source.x, source.y, 0.2};
  bool found_direct = false, found_mirror = false;
  for (const Point3& r : roots) {
    if (distance(r, source) < 1e-6) found_direct = true;
    if (distance(r, mirrored) < 1e-6) found_mirror = true;
  }
  CHECK(found_direct);
  CHECK(found_mirror);
}

TEST_CASE("build_candidates covers every source on noiseless data") {
  // The minimal solve reproduces each source exactly from its own TDOA
  // combination. Keep-first deduplication at 1 cm can occasionally replace
  // that root with a mixed-combination root that happens to fall within the
  // dedup radius, so the guaranteed cover distance is the dedup radius; the
  // exact cover must still hold for nearly all sources.
  Rng rng(33);
  int exact = 0, total = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
    const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
    const auto sets = choose_pair_sets(12, 3, 3, rng);
    const CandidateSet cands = build_candidates(ms, sets, scene.receivers);
    for (const Point3& s : scene.sources) {
      double best = 1e300;
      for (const Candidate& c : cands.candidates) best = std::min(best, distance(c.position, s));
      CHECK(best < 0.01 + 1e-6);
      if (best < 1e-6) ++exact;
      ++total;
    }
    // dedup invariant and residual acceptance
    for (std::size_t a = 0; a < cands.candidates.size(); ++a) {
      CHECK(cands.candidates[a].residual <= MlatConfig{}.accept_tol);
      for (std::size_t b = a + 1; b < cands.candidates.size(); ++b)
        CHECK(distance(cands.candidates[a].position, cands.candidates[b].position) > 0.01);
    }
  }
  CHECK(total == 150);
  CHECK(exact >= total * 9 / 10);
}

TEST_CASE("build_candidates merges near-duplicates and keeps the first") {
  // two index sets over the same scene produce the true source twice; the
  // second occurrence must be deduplicated
  Rng rng(55);
  const Scene scene = generate_scene(12, 1, {10, 10, 2}, rng);
  const MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
  const auto sets = choose_pair_sets(12, 2, 3, rng);
  const CandidateSet cands = build_candidates(ms, sets, scene.receivers);
  int near_source = 0;
  for (const Candidate& c : cands.candidates)
    if (distance(c.position, scene.sources[0]) < 0.01) ++near_source;
  CHECK(near_source == 1);
}

TEST_CASE("index sets with an empty pair are skipped and reported") {
  Rng rng(66);
  const Scene scene = generate_scene(6, 1, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.0}, rng);
  const auto sets = choose_pair_sets(6, 2, 3, rng);
  // delete every measurement of the first pair of set 0
  const ReceiverPair victim = sets[0].pairs[0];
  MeasurementSet pruned;
  for (const TdoaMeasurement& m : ms.measurements)
    if (!(m.pair == victim)) pruned.measurements.push_back(m);
  const CandidateSet cands = build_candidates(pruned, sets, scene.receivers);
  REQUIRE(cands.skipped_sets.size() == 1);
  CHECK(cands.skipped_sets[0] == 0);
  for (const Candidate& c : cands.candidates) CHECK(c.set_id == 1);
}

TEST_CASE("accept_tol tracks sigma") {
  CHECK(accept_tol_for_sigma(0.0) == doctest::Approx(1e-6));
  CHECK(accept_tol_for_sigma(0.03) == doctest::Approx(3 * 0.03 * std::sqrt(3.0)));
}

TEST_CASE("serial and parallel candidate construction agree exactly") {
  Rng rng(77);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.03}, rng);
  ms = inject_false(std::move(ms), 8, rng);
  const auto sets = choose_pair_sets(12, 3, 3, rng);
  MlatConfig serial_cfg;
  serial_cfg.accept_tol = accept_tol_for_sigma(0.03);
  serial_cfg.parallel = false;
  MlatConfig parallel_cfg = serial_cfg;
  parallel_cfg.parallel = true;
  const CandidateSet a = build_candidates(ms, sets, scene.receivers, serial_cfg);
  const CandidateSet b = build_candidates(ms, sets, scene.receivers, parallel_cfg);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.candidates[static_cast<std::size_t>(i)].position ==
          b.candidates[static_cast<std::size_t>(i)].position);
    CHECK(a.candidates[static_cast<std::size_t>(i)].tuple ==
          b.candidates[static_cast<std::size_t>(i)].tuple);
  }
}
