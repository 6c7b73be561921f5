#include "tdoa_assoc/refine.hpp"

#include <limits>
#include <stdexcept>

#include "damped_gauss_newton.hpp"

namespace tdoa_assoc {

ReassociationResult reassociate(const MeasurementSet& ms, std::span<const Point3> selected,
                                std::span<const Point3> receivers, const SolverConfig& cfg) {
  if (selected.empty()) throw std::invalid_argument("reassociate: no selected candidates");
  const CostMatrix cm = build_cost(selected, ms, receivers);
  SinkhornResult solved = sinkhorn_solve(cm, cfg);
  ReassociationResult out;
  out.assoc = extract_selection(solved.plan, static_cast<int>(selected.size()));
  out.diag = std::move(solved.diag);

  // A measurement whose cost gap between two options is below the entropic
  // resolution carries near-equal transport mass on both, and the hard
  // argmax then rides on equilibrium noise. Break such ties by ground cost,
  // which is the argmax of the unregularized problem.
  const double tie_ratio = std::exp(-2.0);
  for (Eigen::Index i = 0; i < cm.rows(); ++i) {
    double vmax = solved.plan.m(i);
    for (Eigen::Index j = 0; j < cm.cols(); ++j) vmax = std::max(vmax, solved.plan.M(i, j));
    if (!(vmax > 0.0)) continue;
    int candidates = 0;
    int best = kVoid;
    double best_cost = std::numeric_limits<double>::infinity();
    if (solved.plan.m(i) >= tie_ratio * vmax) {
      ++candidates;
      best_cost = cm.c(i);
    }
    for (Eigen::Index j = 0; j < cm.cols(); ++j) {
      if (solved.plan.M(i, j) < tie_ratio * vmax) continue;
      ++candidates;
      if (cm.C(i, j) < best_cost) {
        best = static_cast<int>(j);
        best_cost = cm.C(i, j);
      }
    }
    if (candidates > 1) out.assoc.assign[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

namespace {

// Reflection of a point across the best-fit plane of the receiver array.
// TDOA objectives have a near-mirror local minimum on the far side of the
// array plane whenever the receivers are close to coplanar; starting the
// local search from both sides and keeping the better optimum escapes it.
Point3 reflect_across_array_plane(const Point3& x, std::span<const Point3> receivers) {
  Point3 centroid{};
  for (const Point3& r : receivers) centroid = centroid + r;
  centroid = centroid * (1.0 / static_cast<double>(receivers.size()));

  double cov[3][3] = {};
  for (const Point3& r : receivers) {
    const Point3 d = r - centroid;
    const double v[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[a][b] += v[a] * v[b];
  }
  // normal = eigenvector of the smallest eigenvalue, via inverse-power-like
  // deflation: two cross products of the dominant directions suffice for a
  // 3x3, but plain inverse iteration from a fixed seed is simpler
  Point3 n{0.0, 0.0, 1.0};
  for (int it = 0; it < 50; ++it) {
    // one Jacobi-free inverse iteration step: solve cov * y = n
    Eigen::Matrix3d M;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) M(a, b) = cov[a][b];
    M += 1e-9 * Eigen::Matrix3d::Identity();
    const Eigen::Vector3d y = M.ldlt().solve(Eigen::Vector3d(n.x, n.y, n.z));
    const double norm = y.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    const Point3 next{y(0) / norm, y(1) / norm, y(2) / norm};
    const double drift = std::min(distance(next, n), distance(next * -1.0, n));
    n = next;
    if (drift < 1e-12) break;
  }
  const double offset = (x - centroid).dot(n);
  return x - n * (2.0 * offset);
}

}  // namespace

RefineOutcome refine_position(const Point3& x0, std::span<const TdoaMeasurement> assigned,
                              std::span<const Point3> receivers, const RefineConfig& rc) {
  if (rc.max_evals < 1 || !(rc.xtol > 0.0) || !(rc.ftol > 0.0))
    throw std::invalid_argument("refine_position: invalid config");

  std::vector<detail::TdoaEquation> eqs;
  eqs.reserve(assigned.size());
  for (const TdoaMeasurement& m : assigned)
    eqs.push_back({receivers[static_cast<std::size_t>(m.pair.k)],
                   receivers[static_cast<std::size_t>(m.pair.l)], m.value});

  RefineOutcome out;
  if (eqs.size() < 3) {
    out.position = x0;
    out.objective = detail::objective_at(eqs, x0);
    out.refined = false;
    out.converged = false;
    return out;
  }

  detail::LeastSquaresOptions opt;
  opt.max_iter = rc.max_evals;
  opt.xtol = rc.xtol;
  opt.ftol = rc.ftol;
  auto best = detail::solve_tdoa_least_squares(eqs, x0, opt);
  const Point3 mirrored = reflect_across_array_plane(x0, receivers);
  const auto alt = detail::solve_tdoa_least_squares(eqs, mirrored, opt);
  if (alt.objective < best.objective) best = alt;

  out.position = best.x;
  out.objective = best.objective;
  out.refined = true;
  out.converged = best.converged;
  return out;
}

}  // namespace tdoa_assoc
