#pragma once

#include <array>
#include <optional>
#include <vector>

#include "tdoa_assoc/geometry.hpp"
#include "tdoa_assoc/rng.hpp"

namespace tdoa_assoc {

/// Receiver/source geometry for one simulated room.
struct Scene {
  std::vector<Point3> receivers;
  std::vector<Point3> sources;  // ground truth; empty for real data
  double rho = 1.0;             // propagation speed
};

/// Truth tag for an injected false measurement.
constexpr int kFalseMeasurement = -1;

struct TdoaMeasurement {
  ReceiverPair pair;
  double value = 0.0;  // meters (seconds * rho)
  // Simulation bookkeeping only: generating source index, or
  // kFalseMeasurement. Never read by the solver path.
  std::optional<int> truth;
};

/// Flat list of TDOA measurements with deterministic iteration order.
struct MeasurementSet {
  std::vector<TdoaMeasurement> measurements;

  int size() const { return static_cast<int>(measurements.size()); }

  /// Row indices of all measurements for one receiver pair (the set
  /// Psi(k,l)), in list order.
  std::vector<int> rows_for_pair(const ReceiverPair& pair) const;

  /// Distinct pairs present, sorted lexicographically.
  std::vector<ReceiverPair> distinct_pairs() const;

  bool fully_labeled() const;
};

struct NoiseSpec {
  double sigma = 0.0;  // std dev of additive Gaussian TDOA noise, meters
};

/// Uniformly random receivers and sources inside the given box. Receivers
/// closer than 1e-6 m to an earlier one are resampled. Deterministic for a
/// given rng state.
Scene generate_scene(int receivers, int sources, const std::array<double, 3>& room, Rng& rng);

/// One measurement per (source, receiver pair), perturbed by N(0, sigma^2)
/// and tagged with the generating source index.
MeasurementSet synthesize_measurements(const Scene& scene, const NoiseSpec& noise, Rng& rng);

/// Adds n false measurements: each picks a pair uniformly among the pairs
/// present in the set and draws a value uniformly within that pair's
/// existing [min, max] value range.
MeasurementSet inject_false(MeasurementSet ms, int n, Rng& rng);

/// Deletes n measurements chosen uniformly without replacement, preserving
/// the order of the survivors.
MeasurementSet remove_measurements(MeasurementSet ms, int n, Rng& rng);

}  // namespace tdoa_assoc
