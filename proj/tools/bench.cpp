// Benchmark of the OpenMP kernels against their serial reference paths:
// candidate construction (parallel over TDOA combinations), the association
// solve (parallel row rebalances), and Monte-Carlo trials (parallel over
// trials). Each comparison also verifies that both paths produce identical
// output.

#include <chrono>
#include <cstdio>

#include "tdoa_assoc/experiment.hpp"
#include "tdoa_assoc/parallel.hpp"
#include "tdoa_assoc/pipeline.hpp"

using namespace tdoa_assoc;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

}  // namespace

int main() {
  std::printf("worker threads: %d\n\n", max_threads());

  // a noisy corrupted scene keeps all kernels busy
  Rng rng(2024);
  const Scene scene = generate_scene(12, 3, {10, 10, 2}, rng);
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{0.03}, rng);
  ms = inject_false(std::move(ms), 22, rng);
  const MeasurementSet canon = canonical_order(ms);
  Rng set_rng(7);
  const auto sets = choose_pair_sets(12, 3, 3, set_rng);

  MlatConfig mlat_serial;
  mlat_serial.accept_tol = accept_tol_for_sigma(0.03);
  mlat_serial.parallel = false;
  MlatConfig mlat_parallel = mlat_serial;
  mlat_parallel.parallel = true;

  CandidateSet cands_serial, cands_parallel;
  (void)build_candidates(canon, sets, scene.receivers, mlat_serial);  // warm up
  const double t_mlat_serial = time_best_of(
      3, [&] { cands_serial = build_candidates(canon, sets, scene.receivers, mlat_serial); });
  const double t_mlat_parallel = time_best_of(
      3, [&] { cands_parallel = build_candidates(canon, sets, scene.receivers, mlat_parallel); });
  bool mlat_same = cands_serial.size() == cands_parallel.size();
  for (int i = 0; mlat_same && i < cands_serial.size(); ++i)
    mlat_same = cands_serial.candidates[static_cast<std::size_t>(i)].position ==
                cands_parallel.candidates[static_cast<std::size_t>(i)].position;
  std::printf("candidate construction  serial %.4fs  parallel %.4fs  speedup %.2fx  identical %s\n",
              t_mlat_serial, t_mlat_parallel, t_mlat_serial / t_mlat_parallel,
              mlat_same ? "yes" : "NO");

  const CostMatrix cm = build_cost(cands_serial, canon, scene.receivers);
  SolverConfig solver_serial;
  solver_serial.R_tilde = pair_count(12);
  solver_serial.parallel = false;
  SolverConfig solver_parallel = solver_serial;
  solver_parallel.parallel = true;

  SinkhornResult solve_serial, solve_parallel;
  const double t_solve_serial =
      time_best_of(2, [&] { solve_serial = sinkhorn_solve(cm, solver_serial); });
  const double t_solve_parallel =
      time_best_of(2, [&] { solve_parallel = sinkhorn_solve(cm, solver_parallel); });
  const bool solve_same =
      (solve_serial.plan.M - solve_parallel.plan.M).cwiseAbs().maxCoeff() == 0.0 &&
      (solve_serial.plan.m - solve_parallel.plan.m).cwiseAbs().maxCoeff() == 0.0;
  std::printf("association solve       serial %.4fs  parallel %.4fs  speedup %.2fx  identical %s\n",
              t_solve_serial, t_solve_parallel, t_solve_serial / t_solve_parallel,
              solve_same ? "yes" : "NO");

  SweepSpec sweep;
  sweep.kind = SweepKind::False;
  sweep.grid = {10.0};
  sweep.trials = 8;
  sweep.seed = 31;
  sweep.parallel = false;
  std::string csv_serial, csv_parallel;
  const double t_sweep_serial = time_best_of(1, [&] { csv_serial = sweep_csv(run_sweep(sweep)); });
  sweep.parallel = true;
  const double t_sweep_parallel =
      time_best_of(1, [&] { csv_parallel = sweep_csv(run_sweep(sweep)); });
  std::printf("monte-carlo trials (8)  serial %.4fs  parallel %.4fs  speedup %.2fx  identical %s\n",
              t_sweep_serial, t_sweep_parallel, t_sweep_serial / t_sweep_parallel,
              csv_serial == csv_parallel ? "yes" : "NO");

  return mlat_same && solve_same && csv_serial == csv_parallel ? 0 : 1;
}
