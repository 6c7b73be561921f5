#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace tdoa_assoc {

/// 3D point or vector, coordinates in meters.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  bool operator==(const Point3&) const = default;
};

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

/// Receiver pair stored in canonical order k < l.
struct ReceiverPair {
  int k = 0;
  int l = 1;

  bool operator==(const ReceiverPair&) const = default;
  bool operator<(const ReceiverPair& o) const {
    return k != o.k ? k < o.k : l < o.l;
  }
};

inline ReceiverPair make_receiver_pair(int k, int l) {
  if (k < 0 || l <= k) throw std::invalid_argument("receiver pair requires 0 <= k < l");
  return ReceiverPair{k, l};
}

inline int pair_count(int receivers) { return receivers * (receivers - 1) / 2; }

/// All pairs (k, l) with k < l, in lexicographic order.
inline std::vector<ReceiverPair> all_receiver_pairs(int receivers) {
  std::vector<ReceiverPair> pairs;
  pairs.reserve(static_cast<std::size_t>(pair_count(receivers)));
  for (int k = 0; k < receivers; ++k)
    for (int l = k + 1; l < receivers; ++l) pairs.push_back({k, l});
  return pairs;
}

/// Difference of source-receiver distances, scaled by propagation speed:
/// (|s - rk| - |s - rl|) / rho. With rho = 1 the value is in meters.
inline double tdoa(const Point3& source, const Point3& rk, const Point3& rl, double rho = 1.0) {
  if (!(rho > 0.0)) throw std::invalid_argument("propagation speed must be positive");
  return (distance(source, rk) - distance(source, rl)) / rho;
}

}  // namespace tdoa_assoc
