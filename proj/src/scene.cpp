#include "tdoa_assoc/scene.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace tdoa_assoc {

namespace {
constexpr double kMinReceiverSeparation = 1e-6;  // meters
constexpr int kMaxResampleAttempts = 1000;
}  // namespace

std::vector<int> MeasurementSet::rows_for_pair(const ReceiverPair& pair) const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i)
    if (measurements[static_cast<std::size_t>(i)].pair == pair) rows.push_back(i);
  return rows;
}

std::vector<ReceiverPair> MeasurementSet::distinct_pairs() const {
  std::vector<ReceiverPair> pairs;
  pairs.reserve(measurements.size());
  for (const auto& m : measurements) pairs.push_back(m.pair);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

bool MeasurementSet::fully_labeled() const {
  return std::all_of(measurements.begin(), measurements.end(),
                     [](const TdoaMeasurement& m) { return m.truth.has_value(); });
}

Scene generate_scene(int receivers, int sources, const std::array<double, 3>& room, Rng& rng) {
  if (receivers < 4) throw std::invalid_argument("generate_scene: need at least 4 receivers");
  if (sources < 1) throw std::invalid_argument("generate_scene: need at least 1 source");
  for (double d : room)
    if (!(d > 0.0)) throw std::invalid_argument("generate_scene: room dimensions must be positive");

  auto draw_point = [&]() {
    const double x = rng.uniform(0.0, room[0]);
    const double y = rng.uniform(0.0, room[1]);
    const double z = rng.uniform(0.0, room[2]);
    return Point3{x, y, z};
  };

  Scene scene;
  scene.receivers.reserve(static_cast<std::size_t>(receivers));
  for (int r = 0; r < receivers; ++r) {
    int attempts = 0;
    for (;;) {
      const Point3 p = draw_point();
      const bool separated =
          std::all_of(scene.receivers.begin(), scene.receivers.end(), [&](const Point3& q) {
            return distance(p, q) >= kMinReceiverSeparation;
          });
      if (separated) {
        scene.receivers.push_back(p);
        break;
      }
      if (++attempts > kMaxResampleAttempts)
        throw std::runtime_error("generate_scene: could not separate receivers");
    }
  }
  scene.sources.reserve(static_cast<std::size_t>(sources));
  for (int s = 0; s < sources; ++s) scene.sources.push_back(draw_point());
  return scene;
}

MeasurementSet synthesize_measurements(const Scene& scene, const NoiseSpec& noise, Rng& rng) {
  if (scene.receivers.size() < 4) throw std::invalid_argument("synthesize: scene needs >= 4 receivers");
  if (!(scene.rho > 0.0)) throw std::invalid_argument("synthesize: rho must be positive");
  if (noise.sigma < 0.0) throw std::invalid_argument("synthesize: sigma must be non-negative");

  const auto pairs = all_receiver_pairs(static_cast<int>(scene.receivers.size()));
  MeasurementSet ms;
  ms.measurements.reserve(scene.sources.size() * pairs.size());
  for (int j = 0; j < static_cast<int>(scene.sources.size()); ++j) {
    const Point3& s = scene.sources[static_cast<std::size_t>(j)];
    for (const ReceiverPair& p : pairs) {
      const double clean = tdoa(s, scene.receivers[static_cast<std::size_t>(p.k)],
                                scene.receivers[static_cast<std::size_t>(p.l)], scene.rho);
      // always consume a draw so the stream layout is independent of sigma
      const double value = clean + noise.sigma * rng.normal();
      ms.measurements.push_back({p, value, j});
    }
  }
  return ms;
}

MeasurementSet inject_false(MeasurementSet ms, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("inject_false: n must be non-negative");
  const auto pairs = ms.distinct_pairs();
  if (n > 0 && pairs.empty())
    throw std::invalid_argument("inject_false: no existing measurements to derive ranges from");

  for (int i = 0; i < n; ++i) {
    const ReceiverPair pair = pairs[rng.uniform_index(pairs.size())];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& m : ms.measurements) {
      if (m.pair == pair) {
        lo = std::min(lo, m.value);
        hi = std::max(hi, m.value);
      }
    }
    const double value = lo < hi ? rng.uniform(lo, hi) : lo;
    ms.measurements.push_back({pair, value, kFalseMeasurement});
  }
  return ms;
}

MeasurementSet remove_measurements(MeasurementSet ms, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("remove_measurements: n must be non-negative");
  if (n > ms.size()) throw std::invalid_argument("remove_measurements: n exceeds set size");

  // partial Fisher-Yates over the index array picks n distinct victims
  std::vector<int> idx(static_cast<std::size_t>(ms.size()));
  for (int i = 0; i < ms.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  std::vector<bool> removed(static_cast<std::size_t>(ms.size()), false);
  for (int i = 0; i < n; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(ms.size() - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    removed[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = true;
  }
  MeasurementSet out;
  out.measurements.reserve(static_cast<std::size_t>(ms.size() - n));
  for (int i = 0; i < ms.size(); ++i)
    if (!removed[static_cast<std::size_t>(i)]) out.measurements.push_back(ms.measurements[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace tdoa_assoc
