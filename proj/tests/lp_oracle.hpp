#pragma once

// Test-only dense simplex solver for tiny linear programs, used as an
// independent oracle for the transport relaxation. Two-phase method with
// Bland's rule; sizes here are a few dozen variables at most.

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tdoa_assoc/transport.hpp"

namespace lp_oracle {

struct SimplexProblem {
  // minimize cost'x  s.t.  Aeq x = beq,  Aub x <= bub,  x >= 0
  Eigen::VectorXd cost;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Aub;
  Eigen::VectorXd bub;
};

struct SimplexResult {
  bool ok = false;
  double value = 0.0;
  Eigen::VectorXd x;
};

inline SimplexResult solve(const SimplexProblem& p) {
  const int n = static_cast<int>(p.cost.size());
  const int me = static_cast<int>(p.beq.size());
  const int mu = static_cast<int>(p.bub.size());
  const int m = me + mu;
  const int total = n + mu + m;  // structural + slack + artificial

  // rows: constraints (eq first), all with nonnegative rhs
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, total + 1);
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) {
    Eigen::VectorXd row(n);
    double rhs;
    if (r < me) {
      row = p.Aeq.row(r);
      rhs = p.beq(r);
    } else {
      row = p.Aub.row(r - me);
      rhs = p.bub(r - me);
    }
    double slack_sign = 1.0;
    if (rhs < 0.0) {
      row = -row;
      rhs = -rhs;
      slack_sign = -1.0;
    }
    T.block(r, 0, 1, n) = row.transpose();
    if (r >= me) T(r, n + (r - me)) = slack_sign;
    T(r, n + mu + r) = 1.0;  // artificial
    T(r, total) = rhs;
    basis[static_cast<std::size_t>(r)] = n + mu + r;
  }

  auto run_simplex = [&](const Eigen::VectorXd& objective, int allowed) -> bool {
    // objective row = objective - sum of basis rows' contributions
    T.row(m).setZero();
    T.block(m, 0, 1, allowed) = objective.head(allowed).transpose();
    for (int r = 0; r < m; ++r) {
      const int b = basis[static_cast<std::size_t>(r)];
      if (b < allowed && objective(b) != 0.0) T.row(m) -= objective(b) * T.row(r);
    }
    for (int iter = 0; iter < 20000; ++iter) {
      int enter = -1;
      for (int c = 0; c < allowed; ++c)
        if (T(m, c) < -1e-9) {
          enter = c;  // Bland: lowest index
          break;
        }
      if (enter < 0) return true;
      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) {
        if (T(r, enter) > 1e-11) {
          const double ratio = T(r, total) / T(r, enter);
          if (ratio < best_ratio - 1e-12 ||
              (ratio < best_ratio + 1e-12 &&
               (leave < 0 || basis[static_cast<std::size_t>(r)] < basis[static_cast<std::size_t>(leave)]))) {
            best_ratio = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return false;  // unbounded
      T.row(leave) /= T(leave, enter);
      for (int r = 0; r <= m; ++r) {
        if (r == leave) continue;
        const double f = T(r, enter);
        if (f != 0.0) T.row(r) -= f * T.row(leave);
      }
      basis[static_cast<std::size_t>(leave)] = enter;
    }
    return false;
  };

  // phase 1: drive artificials out
  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
  for (int a = n + mu; a < total; ++a) phase1(a) = 1.0;
  if (!run_simplex(phase1, total)) return {};
  double art_sum = 0.0;
  for (int r = 0; r < m; ++r)
    if (basis[static_cast<std::size_t>(r)] >= n + mu) art_sum += T(r, total);
  if (art_sum > 1e-7) return {};  // infeasible

  // phase 2
  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(total);
  phase2.head(n) = p.cost;
  if (!run_simplex(phase2, n + mu)) return {};

  SimplexResult res;
  res.ok = true;
  res.x = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < m; ++r)
    if (basis[static_cast<std::size_t>(r)] < n) res.x(basis[static_cast<std::size_t>(r)]) = T(r, total);
  res.value = p.cost.dot(res.x);
  return res;
}

/// LP limit of the relaxed association problem: variables [M (T*O, column
/// major), m (T), t (O)], minimizing <C,M> + <c,m> + eta * sum(t) subject to
/// row sums + void = 1, column sums <= R_tilde, M_ij <= t_j.
inline SimplexResult solve_association_lp(const tdoa_assoc::CostMatrix& cm, double eta,
                                          double r_tilde) {
  const int T = static_cast<int>(cm.rows());
  const int O = static_cast<int>(cm.cols());
  const int nM = T * O;
  const int n = nM + T + O;
  SimplexProblem p;
  p.cost = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < O; ++j)
    for (int i = 0; i < T; ++i) p.cost(j * T + i) = cm.C(i, j);
  for (int i = 0; i < T; ++i) p.cost(nM + i) = cm.c(i);
  for (int j = 0; j < O; ++j) p.cost(nM + T + j) = eta;

  p.Aeq = Eigen::MatrixXd::Zero(T, n);
  p.beq = Eigen::VectorXd::Ones(T);
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < O; ++j) p.Aeq(i, j * T + i) = 1.0;
    p.Aeq(i, nM + i) = 1.0;
  }

  p.Aub = Eigen::MatrixXd::Zero(O + nM, n);
  p.bub = Eigen::VectorXd::Zero(O + nM);
  for (int j = 0; j < O; ++j) {
    for (int i = 0; i < T; ++i) p.Aub(j, j * T + i) = 1.0;
    p.bub(j) = r_tilde;
  }
  for (int j = 0; j < O; ++j)
    for (int i = 0; i < T; ++i) {
      const int r = O + j * T + i;
      p.Aub(r, j * T + i) = 1.0;
      p.Aub(r, nM + T + j) = -1.0;
      p.bub(r) = 0.0;
    }
  return solve(p);
}

inline tdoa_assoc::TransportPlan plan_from_lp(const SimplexResult& lp, int T, int O) {
  tdoa_assoc::TransportPlan plan;
  plan.M.resize(T, O);
  for (int j = 0; j < O; ++j)
    for (int i = 0; i < T; ++i) plan.M(i, j) = lp.x(j * T + i);
  plan.m = lp.x.segment(T * O, T);
  return plan;
}

}  // namespace lp_oracle
