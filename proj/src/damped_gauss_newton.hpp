#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "tdoa_assoc/geometry.hpp"

namespace tdoa_assoc::detail {

/// One equation |x - rk| - |x - rl| = d.
struct TdoaEquation {
  Point3 rk;
  Point3 rl;
  double d = 0.0;
};

struct LeastSquaresOptions {
  int max_iter = 80;
  double xtol = 1e-12;   // step norm below which we stop
  double ftol = 1e-14;   // relative objective decrease below which we stop
  double lambda0 = 1e-3; // initial damping
};

struct LeastSquaresResult {
  Point3 x;
  double objective = 0.0;        // sum of squared residuals
  double max_abs_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline double safe_norm(const Point3& v) {
  const double n = v.norm();
  return n > 1e-12 ? n : 1e-12;
}

inline void residuals_and_jacobian(std::span<const TdoaEquation> eqs, const Point3& x,
                                   Eigen::VectorXd& f, Eigen::Matrix<double, Eigen::Dynamic, 3>& J) {
  const auto n = static_cast<Eigen::Index>(eqs.size());
  f.resize(n);
  J.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TdoaEquation& e = eqs[static_cast<std::size_t>(i)];
    const Point3 dk = x - e.rk;
    const Point3 dl = x - e.rl;
    const double nk = safe_norm(dk);
    const double nl = safe_norm(dl);
    f(i) = nk - nl - e.d;
    J(i, 0) = dk.x / nk - dl.x / nl;
    J(i, 1) = dk.y / nk - dl.y / nl;
    J(i, 2) = dk.z / nk - dl.z / nl;
  }
}

inline double objective_at(std::span<const TdoaEquation> eqs, const Point3& x) {
  double obj = 0.0;
  for (const TdoaEquation& e : eqs) {
    const double r = safe_norm(x - e.rk) - safe_norm(x - e.rl) - e.d;
    obj += r * r;
  }
  return obj;
}

/// Levenberg-damped Gauss-Newton on the TDOA residuals. Steps are only
/// accepted when they decrease the objective, so the returned point never
/// scores worse than the start.
inline LeastSquaresResult solve_tdoa_least_squares(std::span<const TdoaEquation> eqs, Point3 x0,
                                                   const LeastSquaresOptions& opt = {}) {
  LeastSquaresResult res;
  Eigen::VectorXd f;
  Eigen::Matrix<double, Eigen::Dynamic, 3> J;
  Point3 x = x0;
  residuals_and_jacobian(eqs, x, f, J);
  double cost = f.squaredNorm();
  double lambda = opt.lambda0;

  for (int iter = 0; iter < opt.max_iter; ++iter) {
    res.iterations = iter + 1;
    const Eigen::Matrix3d JtJ = J.transpose() * J;
    const Eigen::Vector3d g = J.transpose() * f;
    bool accepted = false;
    for (int tries = 0; tries < 24; ++tries) {
      const Eigen::Matrix3d A = JtJ + lambda * Eigen::Matrix3d::Identity();
      const Eigen::Vector3d step = A.ldlt().solve(-g);
      const Point3 xn{x.x + step(0), x.y + step(1), x.z + step(2)};
      const double cn = objective_at(eqs, xn);
      if (cn < cost) {
        const double drop = cost - cn;
        x = xn;
        cost = cn;
        lambda = std::max(lambda * 0.25, 1e-12);
        accepted = true;
        residuals_and_jacobian(eqs, x, f, J);
        if (step.norm() < opt.xtol || drop < opt.ftol * (cost + 1e-300)) {
          res.converged = true;
          iter = opt.max_iter;  // done
        }
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e12) break;
    }
    if (!accepted) {
      res.converged = true;  // stuck at a (local) stationary point
      break;
    }
  }

  res.x = x;
  res.objective = cost;
  res.max_abs_residual = 0.0;
  for (const TdoaEquation& e : eqs) {
    const double r = safe_norm(x - e.rk) - safe_norm(x - e.rl) - e.d;
    res.max_abs_residual = std::max(res.max_abs_residual, std::abs(r));
  }
  return res;
}

}  // namespace tdoa_assoc::detail
