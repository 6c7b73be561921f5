#pragma once

#include <span>
#include <vector>

#include "tdoa_assoc/geometry.hpp"
#include "tdoa_assoc/rng.hpp"
#include "tdoa_assoc/scene.hpp"

namespace tdoa_assoc {

/// P receiver pairs whose index multiset spans at least four distinct
/// receivers, so the minimal problem is well posed.
struct PairIndexSet {
  std::vector<ReceiverPair> pairs;
};

struct MlatConfig {
  int P = 3;                    // measurement equations per minimal problem
  double accept_tol = 1e-6;     // max |residual| for an accepted solution, meters
  double dedup_radius = 0.01;   // candidate dedup distance across the full set, meters
  double cluster_radius = 1e-4; // root clustering distance inside one solve, meters
  bool parallel = true;         // OpenMP over TDOA combinations
};

/// accept_tol that tracks the measurement noise level: max(1e-6, 3*sigma*sqrt(3)).
double accept_tol_for_sigma(double sigma);

struct Candidate {
  Point3 position;
  int set_id = 0;               // which pair index set produced it
  std::vector<int> tuple;       // measurement row indices, one per pair
  double residual = 0.0;        // max absolute TDOA mismatch, meters
};

struct CandidateSet {
  std::vector<Candidate> candidates;
  std::vector<int> skipped_sets;  // index sets with an empty measurement pool

  int size() const { return static_cast<int>(candidates.size()); }
  std::vector<Point3> positions() const;
};

/// Draws K index sets of P pairs each: no receiver pair is used twice across
/// the draw and every set spans >= 4 unique receivers. Throws after bounded
/// resampling if the constraints cannot be met.
std::vector<PairIndexSet> choose_pair_sets(int receivers, int K, int P, Rng& rng);

/// All real solutions x of |x-rk_i| - |x-rl_i| = tdoas[i], i = 1..P, found by
/// multi-start damped Gauss-Newton from a deterministic lattice over the
/// receiver bounding box inflated by 50%. Roots are clustered at
/// cluster_radius and accepted at accept_tol; an empty list means no
/// consistent solution.
std::vector<Point3> solve_minimal(const PairIndexSet& pairs, std::span<const double> tdoas,
                                  std::span<const Point3> receivers, const MlatConfig& cfg = {});

/// Runs solve_minimal over every TDOA combination of every index set and
/// merges the results in deterministic tuple order, dropping candidates
/// closer than dedup_radius to an earlier one.
CandidateSet build_candidates(const MeasurementSet& ms, const std::vector<PairIndexSet>& pair_sets,
                              std::span<const Point3> receivers, const MlatConfig& cfg = {});

}  // namespace tdoa_assoc
