#include "tdoa_assoc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "tdoa_assoc/parallel.hpp"

namespace tdoa_assoc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// exp() below this is negligible against a unit-scale logsumexp sum
constexpr double kExpCutoff = -45.0;
// annealing: epsilon shrinks by this factor per stage down to the target
constexpr double kStageRatio = 40.0;
constexpr int kIntermediateStageCap = 250;
constexpr double kIntermediateStageTol = 1e-3;

struct WaterfillScratch {
  std::vector<int> idx;
  std::vector<double> keys;
};

/// Water-filling minimizer of sum_i y_i * exp(x_i) with sum_i |x_i| <= budget,
/// taking log(y) and writing x in place. Active entries are exactly those
/// with log_y above the water level log_nu, which is found in closed form by
/// scanning prefix sums of the sorted keys. Entries below max(log_y) - budget
/// can never be active and are skipped up front.
void waterfill_log(const double* log_y, int n, double budget, double* x, WaterfillScratch& ws) {
  for (int i = 0; i < n; ++i) x[i] = 0.0;
  if (budget <= 0.0 || n == 0) return;

  double mx = kNegInf;
  for (int i = 0; i < n; ++i) mx = std::max(mx, log_y[i]);
  if (mx == kNegInf) return;  // all weights zero

  ws.idx.clear();
  for (int i = 0; i < n; ++i)
    if (log_y[i] > kNegInf && log_y[i] >= mx - budget) ws.idx.push_back(i);
  std::sort(ws.idx.begin(), ws.idx.end(),
            [&](int a, int b) { return log_y[a] != log_y[b] ? log_y[a] > log_y[b] : a < b; });

  const int K = static_cast<int>(ws.idx.size());
  ws.keys.resize(static_cast<std::size_t>(K) + 1);
  ws.keys[0] = 0.0;
  for (int m = 0; m < K; ++m)
    ws.keys[static_cast<std::size_t>(m) + 1] =
        ws.keys[static_cast<std::size_t>(m)] + log_y[ws.idx[static_cast<std::size_t>(m)]];

  // exactly one active-set size is consistent; keep the least-violating one
  // as a floating-point fallback
  int best_m = K;
  double best_nu = (ws.keys[static_cast<std::size_t>(K)] - budget) / K;
  double best_violation = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= K; ++m) {
    const double nu = (ws.keys[static_cast<std::size_t>(m)] - budget) / m;
    const double upper = log_y[ws.idx[static_cast<std::size_t>(m) - 1]];
    const double lower = m < K ? log_y[ws.idx[static_cast<std::size_t>(m)]] : kNegInf;
    const double violation = std::max(0.0, nu - upper) + std::max(0.0, lower - nu);
    if (violation < best_violation) {
      best_violation = violation;
      best_m = m;
      best_nu = nu;
      if (violation == 0.0) break;
    }
  }

  double used = 0.0;
  for (int t = 0; t < best_m; ++t) {
    const int i = ws.idx[static_cast<std::size_t>(t)];
    x[i] = std::min(0.0, best_nu - log_y[i]);
    used -= x[i];
  }
  // guard the budget against rounding so ||x||_1 <= budget holds exactly
  if (used > budget && used > 0.0) {
    const double scale = budget / used;
    for (int t = 0; t < best_m; ++t) x[ws.idx[static_cast<std::size_t>(t)]] *= scale;
  }
}

/// Scaled dual state for one annealing stage: alpha = lambda/eps,
/// beta = mu/eps, G = Phi/eps.
struct Workspace {
  Eigen::MatrixXd logK;
  Eigen::VectorXd logk;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  Eigen::MatrixXd G;
  Eigen::VectorXd row_residual;
  double capacity = 0.0;  // R_tilde
  double budget = 0.0;
  // per-row aggregates for the capacity-price sweep
  Eigen::VectorXd row_lse;       // logsumexp over all options incl. void
  Eigen::VectorXd row_lse_excl;  // same excluding the dominant option
  std::vector<int> row_arg;      // dominant option: column index, -1 void, -2 stale
};

double row_logsumexp(const Workspace& ws, Eigen::Index i) {
  const Eigen::Index cols = ws.logK.cols();
  double mx = ws.logk(i);
  for (Eigen::Index j = 0; j < cols; ++j)
    mx = std::max(mx, ws.G(i, j) + ws.logK(i, j) - ws.beta(j));
  if (mx == kNegInf) return kNegInf;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double v = ws.G(i, j) + ws.logK(i, j) - ws.beta(j) - mx;
    if (v > kExpCutoff) sum += std::exp(v);
  }
  const double voidv = ws.logk(i) - mx;
  if (voidv > kExpCutoff) sum += std::exp(voidv);
  return mx + std::log(sum);
}

// exact row rebalance; records the pre-update marginal violation of row i
void update_row_one(Workspace& ws, Eigen::Index i) {
  const double L = row_logsumexp(ws, i);
  ws.row_residual(i) = std::abs(std::expm1(ws.alpha(i) + L));
  ws.alpha(i) = -L;
}

double lse2(double a, double b) {
  const double mx = std::max(a, b);
  if (mx == kNegInf) return kNegInf;
  double sum = 0.0;
  if (a - mx > kExpCutoff) sum += std::exp(a - mx);
  if (b - mx > kExpCutoff) sum += std::exp(b - mx);
  return mx + std::log(sum);
}

// rebuilds one row's aggregates: dominant option, logsumexp over all
// options, and logsumexp excluding the dominant one. The excluded sum is
// anchored at the runner-up so it stays finite even when every remaining
// option is far below the dominant one.
void rebuild_row_aggregates(Workspace& ws, Eigen::Index i) {
  const Eigen::Index cols = ws.logK.cols();
  double best = ws.logk(i);
  int arg = kVoid;
  for (Eigen::Index j = 0; j < cols; ++j) {
    const double t = ws.G(i, j) + ws.logK(i, j) - ws.beta(j);
    if (t > best) {
      best = t;
      arg = static_cast<int>(j);
    }
  }
  double second = arg == kVoid ? kNegInf : ws.logk(i);
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (static_cast<int>(j) == arg) continue;
    second = std::max(second, ws.G(i, j) + ws.logK(i, j) - ws.beta(j));
  }
  double rest = 0.0;  // sum of exp(option - second) over non-dominant options
  if (second > kNegInf) {
    if (arg != kVoid) {
      const double v = ws.logk(i) - second;
      if (v > kExpCutoff) rest += std::exp(v);
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (static_cast<int>(j) == arg) continue;
      const double v = ws.G(i, j) + ws.logK(i, j) - ws.beta(j) - second;
      if (v > kExpCutoff) rest += std::exp(v);
    }
  }
  ws.row_arg[static_cast<std::size_t>(i)] = arg;
  ws.row_lse_excl(i) = rest > 0.0 ? second + std::log(rest) : kNegInf;
  ws.row_lse(i) = lse2(best, ws.row_lse_excl(i));
}

// refresh the per-row option aggregates used by the column sweeps
void refresh_row_aggregates(Workspace& ws) {
  const Eigen::Index rows = ws.logK.rows();
  ws.row_lse.resize(rows);
  ws.row_lse_excl.resize(rows);
  ws.row_arg.assign(static_cast<std::size_t>(rows), kVoid);
  for (Eigen::Index i = 0; i < rows; ++i) rebuild_row_aggregates(ws, i);
}

// logsumexp of row i's options excluding column j; repairs the row's
// aggregates from scratch when they are stale or the log-diff would cancel
double row_other_options(Workspace& ws, Eigen::Index i, Eigen::Index j) {
  int arg = ws.row_arg[static_cast<std::size_t>(i)];
  if (arg == -2) {
    rebuild_row_aggregates(ws, i);
    arg = ws.row_arg[static_cast<std::size_t>(i)];
  }
  if (arg == static_cast<int>(j)) return ws.row_lse_excl(i);
  const double term_j = ws.G(i, j) + ws.logK(i, j) - ws.beta(j);
  const double share_log = term_j - ws.row_lse(i);
  if (share_log < -0.3) {
    // safe log-diff: the column is not dominant, its share is bounded away from 1
    return ws.row_lse(i) + std::log1p(-std::exp(share_log));
  }
  // column j is comparable to the dominant option: sum the rest directly,
  // anchored at the largest remaining option so tiny sums stay finite
  const Eigen::Index cols = ws.logK.cols();
  double mx = ws.logk(i);
  for (Eigen::Index jj = 0; jj < cols; ++jj) {
    if (jj == j) continue;
    mx = std::max(mx, ws.G(i, jj) + ws.logK(i, jj) - ws.beta(jj));
  }
  if (mx == kNegInf) return kNegInf;
  double sum = 0.0;
  {
    const double v = ws.logk(i) - mx;
    if (v > kExpCutoff) sum += std::exp(v);
  }
  for (Eigen::Index jj = 0; jj < cols; ++jj) {
    if (jj == j) continue;
    const double v = ws.G(i, jj) + ws.logK(i, jj) - ws.beta(jj) - mx;
    if (v > kExpCutoff) sum += std::exp(v);
  }
  return mx + std::log(sum);
}

/// Clearing price for one column against fixed others_i margins:
/// demand(beta) = sum_i 1/(1 + exp(diff_i + beta)) equals the capacity, or
/// beta = 0 when demand at zero already fits. Monotone in beta; solved by
/// bisection-guarded Newton.
double clear_price(const std::vector<double>& diff, double capacity, double beta_hint) {
  auto demand_and_slope = [&](double beta) {
    double d = 0.0;
    double slope = 0.0;
    for (double di : diff) {
      const double e = di + beta;
      if (e > 40.0) continue;  // share ~ 0
      const double s = e < -40.0 ? 1.0 : 1.0 / (1.0 + std::exp(e));
      d += s;
      slope -= s * (1.0 - s);
    }
    return std::pair<double, double>(d, slope);
  };

  // cheap screen: rows with diff >= 40 contribute ~nothing at beta = 0, so
  // if the remaining rows cannot exceed the capacity the price stays zero
  int possible = 0;
  for (double di : diff)
    if (di < 40.0 && ++possible > static_cast<int>(capacity)) break;
  if (possible <= capacity) return 0.0;
  if (demand_and_slope(0.0).first <= capacity) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, beta_hint);
  while (demand_and_slope(hi).first > capacity) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e18) break;
  }
  double x = std::min(hi, std::max(lo, beta_hint));
  for (int it = 0; it < 90; ++it) {
    const auto [d, slope] = demand_and_slope(x);
    if (d > capacity)
      lo = x;
    else
      hi = x;
    if (hi - lo <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) break;
    double next = x;
    if (slope < 0.0) next = x - (d - capacity) / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return 0.5 * (lo + hi);
}

// folds a column's changed option value (price and/or suppression) into the
// per-row aggregates; others[i] is the row's off-column logsumexp
void fold_column_update(Workspace& ws, Eigen::Index j, const std::vector<double>& others,
                        const std::vector<double>& t_old, const std::vector<double>& t_new) {
  const Eigen::Index rows = ws.logK.rows();
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double o = others[static_cast<std::size_t>(i)];
    const double tn = t_new[static_cast<std::size_t>(i)];
    ws.row_lse(i) = lse2(o, tn);
    const int arg = ws.row_arg[static_cast<std::size_t>(i)];
    if (tn >= o) {
      ws.row_arg[static_cast<std::size_t>(i)] = static_cast<int>(j);
      ws.row_lse_excl(i) = o;
    } else if (arg == static_cast<int>(j)) {
      ws.row_arg[static_cast<std::size_t>(i)] = -2;  // dominant option unknown now
    } else if (arg != -2) {
      // excl contains column j at the old value; swap it for the new one
      const double share_log = t_old[static_cast<std::size_t>(i)] - ws.row_lse_excl(i);
      if (share_log < -0.3)
        ws.row_lse_excl(i) = lse2(ws.row_lse_excl(i) + std::log1p(-std::exp(share_log)), tn);
      else
        ws.row_arg[static_cast<std::size_t>(i)] = -2;
    }
  }
}

/// Capacity-price (mu) sweep. Each column's price solves the clearing
/// equation with the row rebalance folded into the demand, making it the
/// exact joint minimizer over (lambda, mu_j); pricing columns off fixed row
/// potentials instead moves prices by log-factors per iteration and never
/// crosses large cost gaps at small epsilon. Columns are processed in index
/// order (Gauss-Seidel), serially, so the result is deterministic.
void settle_capacity_prices(Workspace& ws) {
  const Eigen::Index rows = ws.logK.rows();
  const Eigen::Index cols = ws.logK.cols();
  refresh_row_aggregates(ws);

  std::vector<double> diff(static_cast<std::size_t>(rows));
  std::vector<double> others(static_cast<std::size_t>(rows));
  std::vector<double> t_old(static_cast<std::size_t>(rows));
  std::vector<double> t_new(static_cast<std::size_t>(rows));
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double t = ws.G(i, j) + ws.logK(i, j);  // price-free option value
      const double o = row_other_options(ws, i, j);
      others[static_cast<std::size_t>(i)] = o;
      diff[static_cast<std::size_t>(i)] = o - t;
    }
    const double beta_new = clear_price(diff, ws.capacity, ws.beta(j));
    if (beta_new != ws.beta(j)) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const double raw = ws.G(i, j) + ws.logK(i, j);
        t_old[static_cast<std::size_t>(i)] = raw - ws.beta(j);
        t_new[static_cast<std::size_t>(i)] = raw - beta_new;
      }
      ws.beta(j) = beta_new;
      fold_column_update(ws, j, others, t_old, t_new);
    }
  }
}

/// Joint suppression + price sweep for the final stage. Per column, the
/// suppression block with the row response folded in minimizes
///   sum_i log(exp(x_i) z_i + w_i)  s.t.  ||x||_1 <= budget,
/// whose optimum equalizes the post-rebalance shares of the active set --
/// the same water-filling, applied to the response margins d_i =
/// log z_i - log w_i instead of the raw kernels. Filling raw kernels locks
/// the suppression onto whichever entries carried it before (their kernels
/// are inflated by the old suppression through the row potentials), which
/// freezes the iteration at a nonzero duality gap; the response margins
/// make the active set follow the actual column maxima. The clearing price
/// is then re-solved against the new suppression.
void settle_column_joint(Workspace& ws, Eigen::Index j, double theta,
                         std::vector<double>& scratch_d, std::vector<double>& scratch_x,
                         std::vector<double>& others, std::vector<double>& t_old,
                         std::vector<double>& t_new, WaterfillScratch& wf) {
  const Eigen::Index rows = ws.logK.rows();
  scratch_d.resize(static_cast<std::size_t>(rows));
  scratch_x.resize(static_cast<std::size_t>(rows));
  others.resize(static_cast<std::size_t>(rows));
  t_old.resize(static_cast<std::size_t>(rows));
  t_new.resize(static_cast<std::size_t>(rows));

  for (Eigen::Index i = 0; i < rows; ++i) {
    const double o = row_other_options(ws, i, j);
    others[static_cast<std::size_t>(i)] = o;
    t_old[static_cast<std::size_t>(i)] = ws.G(i, j) + ws.logK(i, j) - ws.beta(j);
    // price-free margins: the price drops out of the joint (suppression,
    // price) optimum -- the suppression depends only on these margins and
    // the price then clears the demand given that suppression
    scratch_d[static_cast<std::size_t>(i)] = ws.logK(i, j) - o;
  }
  waterfill_log(scratch_d.data(), static_cast<int>(rows), ws.budget, scratch_x.data(), wf);
  for (Eigen::Index i = 0; i < rows; ++i)
    ws.G(i, j) = theta * scratch_x[static_cast<std::size_t>(i)] + (1.0 - theta) * ws.G(i, j);

  // re-clear the price against the new suppression
  std::vector<double>& diff = scratch_d;
  for (Eigen::Index i = 0; i < rows; ++i)
    diff[static_cast<std::size_t>(i)] =
        others[static_cast<std::size_t>(i)] - (ws.G(i, j) + ws.logK(i, j));
  const double beta_new =
      theta * clear_price(diff, ws.capacity, ws.beta(j)) + (1.0 - theta) * ws.beta(j);
  ws.beta(j) = beta_new;
  for (Eigen::Index i = 0; i < rows; ++i)
    t_new[static_cast<std::size_t>(i)] = ws.G(i, j) + ws.logK(i, j) - beta_new;
  fold_column_update(ws, j, others, t_old, t_new);
}

// One Gauss-Seidel pass of the joint per-column blocks; returns the largest
// price or suppression movement (scaled units). theta < 1 damps the step
// toward the block optimum (same fixed points, breaks ping-pong cycles at
// sparsity ties).
double settle_columns_joint(Workspace& ws, double theta = 1.0) {
  refresh_row_aggregates(ws);
  std::vector<double> d, x, others, t_old, t_new;
  WaterfillScratch wf;
  double moved = 0.0;
  for (Eigen::Index j = 0; j < ws.logK.cols(); ++j) {
    const double beta_before = ws.beta(j);
    const Eigen::VectorXd g_before = ws.G.col(j);
    settle_column_joint(ws, j, theta, d, x, others, t_old, t_new, wf);
    moved = std::max(moved, std::abs(ws.beta(j) - beta_before));
    moved = std::max(moved, (ws.G.col(j) - g_before).cwiseAbs().maxCoeff());
  }
  return moved;
}

void update_rows_serial(Workspace& ws) {
  for (Eigen::Index i = 0; i < ws.logK.rows(); ++i) update_row_one(ws, i);
}

#ifdef _OPENMP
void update_rows_omp(Workspace& ws) {
  const int n = static_cast<int>(ws.logK.rows());
#pragma omp parallel for schedule(static) num_threads(max_threads())
  for (int i = 0; i < n; ++i) update_row_one(ws, i);
}
#else
void update_rows_omp(Workspace& ws) { update_rows_serial(ws); }
#endif

double marginal_residual(const Workspace& ws) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ws.logK.rows(); ++i)
    worst = std::max(worst, std::abs(std::expm1(ws.alpha(i) + row_logsumexp(ws, i))));
  return worst;
}

/// Smallest row-marginal violation that double precision can still certify:
/// the log-domain exponents cancel at the magnitude of the scaled duals, so
/// residuals below ~eps_machine * |alpha| are numerical noise. Relevant for
/// tiny epsilon, where scaled duals reach cost_scale / epsilon.
double certification_floor(const Workspace& ws) {
  double scale = 1.0;
  for (Eigen::Index i = 0; i < ws.alpha.size(); ++i) scale = std::max(scale, std::abs(ws.alpha(i)));
  if (ws.beta.size() > 0) scale += ws.beta.maxCoeff();
  return 8.0 * std::numeric_limits<double>::epsilon() * scale;
}

// primal objective of the plan reconstructed from the current scaled state
double scaled_primal_value(const Workspace& ws, const CostMatrix& cm, double eps, double eta) {
  const Eigen::Index rows = ws.logK.rows();
  const Eigen::Index cols = ws.logK.cols();
  auto entropy_term = [](double a) { return a > 0.0 ? a * std::log(a) - a + 1.0 : 1.0; };
  double value = 0.0;
  double entropy = 0.0;
  double mixed_norm = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    double col_max = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double e = ws.G(i, j) + ws.logK(i, j) + ws.alpha(i) - ws.beta(j);
      const double a = e > -745.0 ? std::exp(e) : 0.0;
      value += cm.C(i, j) * a;
      entropy += entropy_term(a);
      col_max = std::max(col_max, a);
    }
    mixed_norm += col_max;
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double e = ws.logk(i) + ws.alpha(i);
    const double a = e > -745.0 ? std::exp(e) : 0.0;
    value += cm.c(i) * a;
    entropy += entropy_term(a);
  }
  return value + eps * entropy + eta * mixed_norm;
}

// dual value of the current scaled state, in problem units (for traces)
double scaled_dual_value(const Workspace& ws, double eps, double capacity) {
  const Eigen::Index rows = ws.logK.rows();
  const Eigen::Index cols = ws.logK.cols();
  double mass = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double e = ws.G(i, j) + ws.logK(i, j) + ws.alpha(i) - ws.beta(j);
      if (e > -745.0) mass += std::exp(e);
    }
  double void_mass = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double e = ws.logk(i) + ws.alpha(i);
    if (e > -745.0) void_mass += std::exp(e);
  }
  const double lambda_sum = eps * ws.alpha.sum();
  const double mu_sum = eps * ws.beta.sum();
  return eps * static_cast<double>(rows * cols + rows) - eps * (mass + void_mass) + lambda_sum -
         capacity * mu_sum;
}

}  // namespace

double ground_cost(const Point3& x, double tau, const ReceiverPair& pair,
                   std::span<const Point3> receivers) {
  const double predicted = distance(x, receivers[static_cast<std::size_t>(pair.k)]) -
                           distance(x, receivers[static_cast<std::size_t>(pair.l)]);
  const double r = predicted - tau;
  return r * r;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile: q outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

CostMatrix build_cost(std::span<const Point3> candidates, const MeasurementSet& ms,
                      std::span<const Point3> receivers) {
  if (candidates.empty()) throw std::invalid_argument("build_cost: empty candidate set");
  if (ms.size() == 0) throw std::invalid_argument("build_cost: empty measurement set");

  CostMatrix cm;
  const auto rows = static_cast<Eigen::Index>(ms.size());
  const auto cols = static_cast<Eigen::Index>(candidates.size());
  cm.C.resize(rows, cols);
  cm.pair_of.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const TdoaMeasurement& meas = ms.measurements[static_cast<std::size_t>(i)];
    cm.pair_of.push_back(meas.pair);
    for (Eigen::Index j = 0; j < cols; ++j)
      cm.C(i, j) = ground_cost(candidates[static_cast<std::size_t>(j)], meas.value, meas.pair,
                               receivers);
  }

  std::vector<double> entries(cm.C.data(), cm.C.data() + rows * cols);
  const double void_cost = percentile(std::move(entries), 95.0);
  cm.c = Eigen::VectorXd::Constant(rows, void_cost);
  return cm;
}

CostMatrix build_cost(const CandidateSet& candidates, const MeasurementSet& ms,
                      std::span<const Point3> receivers) {
  const auto positions = candidates.positions();
  return build_cost(positions, ms, receivers);
}

Eigen::VectorXd min_exp_under_l1_log(const Eigen::VectorXd& log_y, double budget) {
  if (budget < 0.0) throw std::invalid_argument("min_exp_under_l1: negative budget");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(log_y.size());
  WaterfillScratch scratch;
  waterfill_log(log_y.data(), static_cast<int>(log_y.size()), budget, x.data(), scratch);
  return x;
}

Eigen::VectorXd min_exp_under_l1(const Eigen::VectorXd& y, double budget) {
  Eigen::VectorXd log_y(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) < 0.0) throw std::invalid_argument("min_exp_under_l1: negative weight");
    log_y(i) = y(i) > 0.0 ? std::log(y(i)) : kNegInf;
  }
  return min_exp_under_l1_log(log_y, budget);
}

SinkhornResult sinkhorn_solve(const CostMatrix& cm, const SolverConfig& cfg) {
  const Eigen::Index rows = cm.rows();
  const Eigen::Index cols = cm.cols();
  if (rows < 1 || cols < 1) throw std::invalid_argument("sinkhorn_solve: empty cost matrix");
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("sinkhorn_solve: epsilon must be positive");
  if (cfg.eta < 0.0) throw std::invalid_argument("sinkhorn_solve: eta must be non-negative");
  if (!(cfg.R_tilde > 0.0)) throw std::invalid_argument("sinkhorn_solve: R_tilde must be set");
  if (cfg.max_iter < 1) throw std::invalid_argument("sinkhorn_solve: max_iter must be >= 1");
  if (cm.C.minCoeff() < 0.0 || cm.c.minCoeff() < 0.0 || !cm.C.allFinite() || !cm.c.allFinite())
    throw std::invalid_argument("sinkhorn_solve: costs must be finite and non-negative");
  if (cm.c.size() != rows) throw std::invalid_argument("sinkhorn_solve: void cost size mismatch");

  SinkhornResult out;
  SinkhornDiagnostics& diag = out.diag;

  // annealing schedule: start near the cost scale so the dual variables only
  // ever move by O(1) in scaled units, then sharpen geometrically down to the
  // configured epsilon
  std::vector<double> stages;
  const double cost_scale = std::max(cm.C.maxCoeff(), cm.c.maxCoeff());
  for (double e = cost_scale; e > cfg.epsilon * 1.000001; e /= kStageRatio) stages.push_back(e);
  stages.push_back(cfg.epsilon);

  // duals carried between stages in problem units
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(rows);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(cols);
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(rows, cols);

  Workspace ws;
  ws.row_residual = Eigen::VectorXd::Zero(rows);
  ws.capacity = cfg.R_tilde;

  int iter_used = 0;
  double resid = std::numeric_limits<double>::infinity();
  Eigen::VectorXd alpha_prev;

  // alternating row rebalances and price clearings; settles the
  // (lambda, mu) pair for the current Phi. With clear_prices off it only
  // materializes the row potentials and measures the marginal residual,
  // leaving all price moves to the joint column sweeps.
  auto polish = [&](int cap, double tol, bool clear_prices) {
    for (int it = 0; it < cap; ++it) {
      alpha_prev = ws.alpha;
      if (cfg.parallel)
        update_rows_omp(ws);
      else
        update_rows_serial(ws);
      resid = ws.row_residual.maxCoeff();
      ++iter_used;
      if (cfg.record_trace) diag.residual_trace.push_back(resid);
      if (resid <= std::max(tol, certification_floor(ws))) {
        ws.alpha = alpha_prev;
        return true;
      }
      if (!clear_prices) return false;
      settle_capacity_prices(ws);
    }
    return false;
  };

  for (std::size_t s = 0; s < stages.size(); ++s) {
    const double eps = stages[s];
    const bool final_stage = s + 1 == stages.size();
    ws.logK = cm.C * (-1.0 / eps);
    ws.logk = cm.c * (-1.0 / eps);
    ws.alpha = lambda / eps;
    ws.beta = mu / eps;
    ws.G = Phi / eps;
    ws.budget = cfg.eta / eps;
    const int stage_cap =
        final_stage ? cfg.max_iter - iter_used : std::min(kIntermediateStageCap, cfg.max_iter - iter_used);
    diag.stage_first_iteration.push_back(iter_used);
    SinkhornStageInfo stage_info;
    stage_info.epsilon = eps;
    const int stage_start_iter = iter_used;

    // Alternate exact row rebalances with joint column sweeps. The sweeps
    // iterate to their mutual equilibrium; they are cheap next to the row
    // pass and the columns are strongly coupled through shared rows. On the
    // final stage the loop is additionally driven by the duality gap, which
    // directly measures how far the suppression still is from alignment
    // with the column maxima (the dual value alone is envelope-flat there).
    const double stage_tol = final_stage ? cfg.feas_tol : std::max(kIntermediateStageTol, cfg.feas_tol);
    Eigen::VectorXd best_alpha, best_beta;
    Eigen::MatrixXd best_G;
    double best_gap = std::numeric_limits<double>::infinity();
    double prev_dual = -std::numeric_limits<double>::infinity();
    int flat_outer = 0;
    // sweep passes with adaptive damping: full steps while the movement
    // shrinks, half steps once it plateaus (ties ping-pong otherwise)
    auto run_sweeps = [&](int max_passes) {
      double prev_moved = std::numeric_limits<double>::infinity();
      double theta = 1.0;
      for (int pass = 0; pass < max_passes; ++pass) {
        const double moved = settle_columns_joint(ws, theta);
        ++iter_used;
        if (moved <= 1e-7) break;
        if (moved > 0.7 * prev_moved) theta = 0.5;
        prev_moved = moved;
      }
    };

    if (!final_stage) {
      for (int outer = 0; outer < 200 && iter_used - stage_start_iter < stage_cap; ++outer) {
        const bool settled = polish(std::min(60, stage_cap - (iter_used - stage_start_iter)),
                                    stage_tol, true);
        if (settled && outer > 0) break;
        run_sweeps(40);
      }
    } else {
      // Final stage: alternate full (lambda, mu) equilibration with joint
      // column sweeps, driven by the duality gap (the dual value alone is
      // envelope-flat in the suppression near the optimum). The alternation
      // approaches the saddle linearly along a nearly straight path when
      // sparsity ties are tight, so successive (mu, Phi) iterates are
      // extrapolated geometrically when their steps stay collinear.
      for (int outer = 0; outer < 80 && iter_used - stage_start_iter < stage_cap; ++outer) {
        const bool settled = polish(std::min(40, stage_cap - (iter_used - stage_start_iter)),
                                    cfg.feas_tol, true);
        const double dual_value = scaled_dual_value(ws, eps, cfg.R_tilde);
        const double primal_value = scaled_primal_value(ws, cm, eps, cfg.eta);
        if (cfg.record_trace) diag.dual_value_trace.push_back(dual_value);
        const double gap = primal_value - dual_value;
        if (settled && gap < best_gap) {
          best_gap = gap;
          best_alpha = ws.alpha;
          best_beta = ws.beta;
          best_G = ws.G;
        }
        if (settled && gap <= 1e-6 * std::max(1.0, std::abs(primal_value))) break;
        // once the dual stalls, the remaining gap is cost-tied rows wobbling
        // below double precision; their allocation is optimal either way
        flat_outer =
            dual_value <= prev_dual + 1e-7 * std::max(1.0, std::abs(dual_value)) ? flat_outer + 1 : 0;
        if (flat_outer >= 3) break;
        prev_dual = dual_value;
        run_sweeps(10);
      }
      if (best_gap < std::numeric_limits<double>::infinity()) {
        ws.alpha = best_alpha;
        ws.beta = best_beta;
        ws.G = best_G;
      }
    }

    stage_info.iterations = iter_used - stage_start_iter;
    stage_info.residual = resid;
    diag.stages.push_back(stage_info);
    lambda = eps * ws.alpha;
    mu = eps * ws.beta;
    Phi = eps * ws.G;
    if (iter_used >= cfg.max_iter) break;
  }

  diag.iterations = iter_used;
  diag.residual = marginal_residual(ws);
  diag.residual_floor = certification_floor(ws);
  diag.converged = diag.residual <= std::max(cfg.feas_tol, diag.residual_floor);

  // reconstruct the primal plan from the final scaled state
  out.plan.M.resize(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double e = ws.G(i, j) + ws.logK(i, j) + ws.alpha(i) - ws.beta(j);
      out.plan.M(i, j) = e > -745.0 ? std::exp(e) : 0.0;
    }
  out.plan.m.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double e = ws.logk(i) + ws.alpha(i);
    out.plan.m(i) = e > -745.0 ? std::exp(e) : 0.0;
  }
  out.dual.lambda = std::move(lambda);
  out.dual.mu = std::move(mu);
  out.dual.Phi = std::move(Phi);
  diag.primal = primal_objective(out.plan, cm, cfg);
  diag.dual = dual_objective(out.dual, cm, cfg);
  return out;
}

double primal_objective(const TransportPlan& plan, const CostMatrix& cm, const SolverConfig& cfg) {
  const Eigen::Index rows = cm.rows();
  const Eigen::Index cols = cm.cols();
  if (plan.M.rows() != rows || plan.M.cols() != cols || plan.m.size() != rows)
    throw std::invalid_argument("primal_objective: plan/cost shape mismatch");

  auto entropy_term = [](double a) { return a > 0.0 ? a * std::log(a) - a + 1.0 : 1.0; };

  double value = 0.0;
  double entropy = 0.0;
  double mixed_norm = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    double col_max = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double a = plan.M(i, j);
      value += cm.C(i, j) * a;
      entropy += entropy_term(a);
      col_max = std::max(col_max, std::abs(a));
    }
    mixed_norm += col_max;
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    value += cm.c(i) * plan.m(i);
    entropy += entropy_term(plan.m(i));
  }
  return value + cfg.epsilon * entropy + cfg.eta * mixed_norm;
}

double dual_objective(const DualState& dual, const CostMatrix& cm, const SolverConfig& cfg) {
  const Eigen::Index rows = cm.rows();
  const Eigen::Index cols = cm.cols();
  if (dual.lambda.size() != rows || dual.mu.size() != cols || dual.Phi.rows() != rows)
    throw std::invalid_argument("dual_objective: dual/cost shape mismatch");

  // Lagrangian dual g(lambda, mu, Phi); oriented so that g <= primal for all
  // feasible duals (mu >= 0, per-column ||Phi||_1 <= eta) with equality at
  // the optimum. The textbook statement minimizes
  //   eps<P.K, v x u> + eps<k, v> - <1, lambda> + R~<1, mu>,
  // which equals eps(|T||Omega| + |T|) - g up to the stated constant.
  const double eps = cfg.epsilon;
  double mass = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double e = (dual.Phi(i, j) - cm.C(i, j) + dual.lambda(i) - dual.mu(j)) / eps;
      if (e > -745.0) mass += std::exp(e);
    }
  double void_mass = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double e = (dual.lambda(i) - cm.c(i)) / eps;
    if (e > -745.0) void_mass += std::exp(e);
  }
  return eps * static_cast<double>(rows * cols + rows) - eps * (mass + void_mass) +
         dual.lambda.sum() - cfg.R_tilde * dual.mu.sum();
}

AssociationResult extract_selection(const TransportPlan& plan, int S) {
  const Eigen::Index cols = plan.M.cols();
  const Eigen::Index rows = plan.M.rows();
  if (S < 1) throw std::invalid_argument("extract_selection: S must be positive");
  if (cols < S) throw std::invalid_argument("extract_selection: fewer candidates than sources");

  // Columns are ranked by transported mass. At tiny epsilon the column
  // maximum saturates at 1 for any column that fully explains even a single
  // measurement, so ranking by maxima degenerates into index order among
  // ties; mass ranks a column by how much of the data it explains, which is
  // what dominance means in the unrelaxed problem (a selected column carries
  // exactly R_tilde measurements there).
  std::vector<double> col_mass(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index j = 0; j < cols; ++j)
    col_mass[static_cast<std::size_t>(j)] = plan.M.col(j).sum();

  std::vector<int> order(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j) order[static_cast<std::size_t>(j)] = static_cast<int>(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double qa = col_mass[static_cast<std::size_t>(a)];
    const double qb = col_mass[static_cast<std::size_t>(b)];
    return qa != qb ? qa > qb : a < b;
  });

  AssociationResult res;
  res.selected.assign(order.begin(), order.begin() + S);
  res.scores.reserve(static_cast<std::size_t>(S));
  for (int j : res.selected) res.scores.push_back(col_mass[static_cast<std::size_t>(j)]);

  res.assign.resize(static_cast<std::size_t>(rows), kVoid);
  std::vector<int> selected_sorted = res.selected;
  std::sort(selected_sorted.begin(), selected_sorted.end());
  for (Eigen::Index i = 0; i < rows; ++i) {
    int best = kVoid;
    double best_mass = plan.m(i);
    for (int j : selected_sorted) {
      const double v = plan.M(i, j);
      if (v > best_mass) {
        best_mass = v;
        best = j;
      }
    }
    res.assign[static_cast<std::size_t>(i)] = best;
  }
  return res;
}

}  // namespace tdoa_assoc
