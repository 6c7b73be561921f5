#include "tdoa_assoc/multilateration.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "damped_gauss_newton.hpp"
#include "tdoa_assoc/parallel.hpp"

namespace tdoa_assoc {

namespace {

constexpr int kLatticeX = 5;
constexpr int kLatticeY = 5;
constexpr int kLatticeZ = 3;
constexpr int kMaxSetDraws = 4000;

bool spans_four_receivers(const std::vector<ReceiverPair>& pairs) {
  std::set<int> ids;
  for (const auto& p : pairs) {
    ids.insert(p.k);
    ids.insert(p.l);
  }
  return ids.size() >= 4;
}

/// Deterministic start lattice over the receiver bounding box inflated by
/// 50%. Degenerate box extents (e.g. coplanar receivers) are widened so the
/// lattice still brackets off-plane roots.
std::vector<Point3> start_lattice(std::span<const Point3> receivers) {
  Point3 lo = receivers[0], hi = receivers[0];
  for (const Point3& r : receivers) {
    lo.x = std::min(lo.x, r.x);
    lo.y = std::min(lo.y, r.y);
    lo.z = std::min(lo.z, r.z);
    hi.x = std::max(hi.x, r.x);
    hi.y = std::max(hi.y, r.y);
    hi.z = std::max(hi.z, r.z);
  }
  const Point3 c = (lo + hi) * 0.5;
  const Point3 ext = hi - lo;
  const double max_ext = std::max({ext.x, ext.y, ext.z});
  auto half = [&](double e) { return std::max({0.75 * e, 0.3 * max_ext, 0.5}); };
  const Point3 h{half(ext.x), half(ext.y), half(ext.z)};

  auto axis = [](double center, double halfext, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      v[static_cast<std::size_t>(i)] =
          n == 1 ? center : center - halfext + 2.0 * halfext * i / (n - 1);
    return v;
  };
  const auto xs = axis(c.x, h.x, kLatticeX);
  const auto ys = axis(c.y, h.y, kLatticeY);
  const auto zs = axis(c.z, h.z, kLatticeZ);

  std::vector<Point3> starts;
  starts.reserve(xs.size() * ys.size() * zs.size());
  for (double z : zs)
    for (double y : ys)
      for (double x : xs) starts.push_back({x, y, z});
  return starts;
}

struct TupleTask {
  int set_id = 0;
  std::vector<int> rows;  // measurement indices, one per pair of the set
};

std::vector<Point3> solve_one_tuple(const TupleTask& task, const MeasurementSet& ms,
                                    const std::vector<PairIndexSet>& pair_sets,
                                    std::span<const Point3> receivers, const MlatConfig& cfg) {
  const PairIndexSet& set = pair_sets[static_cast<std::size_t>(task.set_id)];
  std::vector<double> values;
  values.reserve(task.rows.size());
  for (int row : task.rows)
    values.push_back(ms.measurements[static_cast<std::size_t>(row)].value);
  return solve_minimal(set, values, receivers, cfg);
}

void solve_tuples_serial(const std::vector<TupleTask>& tasks, const MeasurementSet& ms,
                         const std::vector<PairIndexSet>& pair_sets,
                         std::span<const Point3> receivers, const MlatConfig& cfg,
                         std::vector<std::vector<Point3>>& roots) {
  for (std::size_t t = 0; t < tasks.size(); ++t)
    roots[t] = solve_one_tuple(tasks[t], ms, pair_sets, receivers, cfg);
}

void solve_tuples_omp(const std::vector<TupleTask>& tasks, const MeasurementSet& ms,
                      const std::vector<PairIndexSet>& pair_sets,
                      std::span<const Point3> receivers, const MlatConfig& cfg,
                      std::vector<std::vector<Point3>>& roots) {
#ifdef _OPENMP
  const int n = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
  for (int t = 0; t < n; ++t)
    roots[static_cast<std::size_t>(t)] =
        solve_one_tuple(tasks[static_cast<std::size_t>(t)], ms, pair_sets, receivers, cfg);
#else
  solve_tuples_serial(tasks, ms, pair_sets, receivers, cfg, roots);
#endif
}

}  // namespace

double accept_tol_for_sigma(double sigma) {
  return std::max(1e-6, 3.0 * sigma * std::sqrt(3.0));
}

std::vector<Point3> CandidateSet::positions() const {
  std::vector<Point3> pos;
  pos.reserve(candidates.size());
  for (const Candidate& c : candidates) pos.push_back(c.position);
  return pos;
}

std::vector<PairIndexSet> choose_pair_sets(int receivers, int K, int P, Rng& rng) {
  if (receivers < 4) throw std::invalid_argument("choose_pair_sets: need >= 4 receivers");
  if (K < 1 || P < 1) throw std::invalid_argument("choose_pair_sets: K and P must be positive");
  if (pair_count(receivers) < K * P)
    throw std::invalid_argument("choose_pair_sets: not enough receiver pairs for K disjoint sets");

  std::vector<PairIndexSet> sets;
  std::vector<ReceiverPair> pool = all_receiver_pairs(receivers);
  int draws = 0;
  while (static_cast<int>(sets.size()) < K) {
    if (++draws > kMaxSetDraws)
      throw std::runtime_error("choose_pair_sets: constraints unsatisfiable after bounded resampling");
    // sample P distinct pairs from the remaining pool
    std::vector<ReceiverPair> picked;
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) idx[i] = i;
    for (int i = 0; i < P; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) + rng.uniform_index(idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      picked.push_back(pool[idx[static_cast<std::size_t>(i)]]);
    }
    if (!spans_four_receivers(picked)) continue;
    // accept: remove the picked pairs from the pool
    std::sort(idx.begin(), idx.begin() + P, std::greater<>());
    for (int i = 0; i < P; ++i) pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx[static_cast<std::size_t>(i)]));
    sets.push_back(PairIndexSet{std::move(picked)});
  }
  return sets;
}

std::vector<Point3> solve_minimal(const PairIndexSet& pairs, std::span<const double> tdoas,
                                  std::span<const Point3> receivers, const MlatConfig& cfg) {
  if (tdoas.size() != pairs.pairs.size())
    throw std::invalid_argument("solve_minimal: one TDOA per receiver pair required");
  if (receivers.size() < 2) throw std::invalid_argument("solve_minimal: receivers missing");

  std::vector<detail::TdoaEquation> eqs;
  eqs.reserve(pairs.pairs.size());
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
    const ReceiverPair& p = pairs.pairs[i];
    const Point3& rk = receivers[static_cast<std::size_t>(p.k)];
    const Point3& rl = receivers[static_cast<std::size_t>(p.l)];
    // a hyperbola branch exists only if |d| does not exceed the baseline
    if (std::abs(tdoas[i]) > distance(rk, rl)) return {};
    eqs.push_back({rk, rl, tdoas[i]});
  }

  std::vector<Point3> roots;
  for (const Point3& start : start_lattice(receivers)) {
    const auto res = detail::solve_tdoa_least_squares(eqs, start);
    if (res.max_abs_residual > cfg.accept_tol) continue;
    const bool duplicate = std::any_of(roots.begin(), roots.end(), [&](const Point3& r) {
      return distance(r, res.x) <= cfg.cluster_radius;
    });
    if (!duplicate) roots.push_back(res.x);
  }
  return roots;
}

CandidateSet build_candidates(const MeasurementSet& ms, const std::vector<PairIndexSet>& pair_sets,
                              std::span<const Point3> receivers, const MlatConfig& cfg) {
  CandidateSet out;

  // enumerate the TDOA combinations Psi_1 x ... x Psi_P per usable index set
  std::vector<TupleTask> tasks;
  for (int set_id = 0; set_id < static_cast<int>(pair_sets.size()); ++set_id) {
    const PairIndexSet& set = pair_sets[static_cast<std::size_t>(set_id)];
    std::vector<std::vector<int>> per_pair_rows;
    bool usable = true;
    for (const ReceiverPair& p : set.pairs) {
      auto rows = ms.rows_for_pair(p);
      if (rows.empty()) {
        usable = false;
        break;
      }
      per_pair_rows.push_back(std::move(rows));
    }
    if (!usable) {
      out.skipped_sets.push_back(set_id);
      continue;
    }
    std::vector<std::size_t> counter(per_pair_rows.size(), 0);
    for (;;) {
      TupleTask task;
      task.set_id = set_id;
      for (std::size_t i = 0; i < counter.size(); ++i)
        task.rows.push_back(per_pair_rows[i][counter[i]]);
      tasks.push_back(std::move(task));
      // lexicographic increment, last pair fastest
      int pos = static_cast<int>(counter.size()) - 1;
      while (pos >= 0) {
        if (++counter[static_cast<std::size_t>(pos)] < per_pair_rows[static_cast<std::size_t>(pos)].size()) break;
        counter[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }

  std::vector<std::vector<Point3>> roots(tasks.size());
  if (cfg.parallel)
    solve_tuples_omp(tasks, ms, pair_sets, receivers, cfg, roots);
  else
    solve_tuples_serial(tasks, ms, pair_sets, receivers, cfg, roots);

  // deterministic merge in task order; keep the first candidate of any
  // dedup_radius neighborhood
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (const Point3& x : roots[t]) {
      const bool duplicate =
          std::any_of(out.candidates.begin(), out.candidates.end(), [&](const Candidate& c) {
            return distance(c.position, x) <= cfg.dedup_radius;
          });
      if (duplicate) continue;
      Candidate c;
      c.position = x;
      c.set_id = tasks[t].set_id;
      c.tuple = tasks[t].rows;
      double max_res = 0.0;
      const PairIndexSet& set = pair_sets[static_cast<std::size_t>(tasks[t].set_id)];
      for (std::size_t i = 0; i < set.pairs.size(); ++i) {
        const ReceiverPair& p = set.pairs[i];
        const double predicted = tdoa(x, receivers[static_cast<std::size_t>(p.k)],
                                      receivers[static_cast<std::size_t>(p.l)]);
        const double measured =
            ms.measurements[static_cast<std::size_t>(tasks[t].rows[i])].value;
        max_res = std::max(max_res, std::abs(predicted - measured));
      }
      c.residual = max_res;
      out.candidates.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace tdoa_assoc
