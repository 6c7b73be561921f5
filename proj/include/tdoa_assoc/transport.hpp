#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "tdoa_assoc/geometry.hpp"
#include "tdoa_assoc/multilateration.hpp"
#include "tdoa_assoc/scene.hpp"

namespace tdoa_assoc {

/// Row assigned to the void sink rather than a candidate.
constexpr int kVoid = -1;

/// Ground costs of explaining each measurement (row) by each candidate
/// (column), plus the constant void cost per row.
struct CostMatrix {
  Eigen::MatrixXd C;                   // |T| x |Omega|, >= 0
  Eigen::VectorXd c;                   // |T| void costs, >= 0
  std::vector<ReceiverPair> pair_of;   // receiver pair behind each row

  Eigen::Index rows() const { return C.rows(); }
  Eigen::Index cols() const { return C.cols(); }
};

struct SolverConfig {
  double epsilon = 1e-7;   // entropy weight; small values sharpen toward the LP
  double eta = 1.0;        // column-sparsity weight
  double R_tilde = 0.0;    // per-column capacity, R(R-1)/2; must be set > 0
  double feas_tol = 1e-8;  // max row-marginal violation at convergence
  int max_iter = 5000;     // total iteration budget across annealing stages
  bool parallel = true;    // OpenMP over rows/columns inside the solver
  bool record_trace = false;  // keep residual/objective traces (diagnostics)
};

struct TransportPlan {
  Eigen::MatrixXd M;  // |T| x |Omega| association mass
  Eigen::VectorXd m;  // |T| void mass
};

/// Dual variables in problem units (not divided by epsilon).
struct DualState {
  Eigen::VectorXd lambda;  // |T|, row potentials
  Eigen::VectorXd mu;      // |Omega|, >= 0, capacity prices
  Eigen::MatrixXd Phi;     // |T| x |Omega|, <= 0, per-column l1 norm <= eta
};

struct SinkhornStageInfo {
  double epsilon = 0.0;
  int iterations = 0;
  double residual = 0.0;
};

struct SinkhornDiagnostics {
  int iterations = 0;      // total across annealing stages
  double residual = 0.0;   // final max row-marginal violation
  double residual_floor = 0.0;  // double-precision certification limit
  bool converged = false;
  double primal = 0.0;
  double dual = 0.0;
  std::vector<SinkhornStageInfo> stages;
  std::vector<double> residual_trace;      // per row rebalance (record_trace)
  std::vector<double> dual_value_trace;    // final stage, per outer round (record_trace)
  std::vector<int> stage_first_iteration;  // annealing stage boundaries
};

struct SinkhornResult {
  TransportPlan plan;
  DualState dual;
  SinkhornDiagnostics diag;
};

/// Squared TDOA mismatch of candidate position x against measurement tau for
/// one receiver pair.
double ground_cost(const Point3& x, double tau, const ReceiverPair& pair,
                   std::span<const Point3> receivers);

/// Cost matrix over candidate positions; the void cost is the 95th percentile
/// (linear interpolation) of all |T| * |Omega| entries.
CostMatrix build_cost(std::span<const Point3> candidates, const MeasurementSet& ms,
                      std::span<const Point3> receivers);
CostMatrix build_cost(const CandidateSet& candidates, const MeasurementSet& ms,
                      std::span<const Point3> receivers);

/// Percentile in [0, 100] of the values by linear interpolation on the sorted
/// order (rank q/100 * (n-1)).
double percentile(std::vector<double> values, double q);

/// Minimizer of <exp(x), y> subject to ||x||_1 <= budget for y >= 0.
/// Active entries are pulled to a common water level; entries with y_i = 0
/// keep x_i = 0. Closed form via sorting, no iterative root-finding.
Eigen::VectorXd min_exp_under_l1(const Eigen::VectorXd& y, double budget);

/// Same minimizer taking log(y) directly (entries may be -inf); this is the
/// overflow-safe form used inside the solver.
Eigen::VectorXd min_exp_under_l1_log(const Eigen::VectorXd& log_y, double budget);

/// Generalized Sinkhorn block-coordinate descent on the dual of the relaxed
/// association problem, run fully in log-domain. The row update folds in the
/// void kernel so each block is minimized exactly. Iterations stop when the
/// row-marginal residual drops below feas_tol; non-convergence within
/// max_iter returns the current iterate flagged.
SinkhornResult sinkhorn_solve(const CostMatrix& cm, const SolverConfig& cfg);

/// <C,M> + <c,m> + epsilon*(D(M)+D(m)) + eta*||M||_inf,1 with
/// D(A) = sum a*log(a) - a + 1 (0*log 0 := 0).
double primal_objective(const TransportPlan& plan, const CostMatrix& cm, const SolverConfig& cfg);

/// Lagrangian dual value oriented so that dual <= primal for every feasible
/// dual point (weak duality) with equality at the optimum.
double dual_objective(const DualState& dual, const CostMatrix& cm, const SolverConfig& cfg);

struct AssociationResult {
  std::vector<int> selected;        // S column indices, by descending score
  std::vector<double> scores;       // column maxima of M for the selected
  std::vector<int> assign;          // per row: candidate column index or kVoid
};

/// Picks the S columns with the largest column maxima (ties to the lower
/// index) and assigns every row to its best selected column or the void.
AssociationResult extract_selection(const TransportPlan& plan, int S);

}  // namespace tdoa_assoc
