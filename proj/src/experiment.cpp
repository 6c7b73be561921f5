#include "tdoa_assoc/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "tdoa_assoc/parallel.hpp"

namespace tdoa_assoc {

namespace {

TrialOutcome run_trial(const SweepSpec& spec, int grid_index, int trial_index) {
  TrialOutcome out;
  const double grid_value = spec.grid[static_cast<std::size_t>(grid_index)];
  const std::uint64_t seed = derive_seed(spec.seed, static_cast<std::uint64_t>(grid_index),
                                         static_cast<std::uint64_t>(trial_index));
  Rng rng(seed);

  const Scene scene = generate_scene(spec.receivers, spec.sources, spec.room, rng);
  const double sigma = spec.kind == SweepKind::Noise ? grid_value : spec.sigma;
  MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{sigma}, rng);
  if (spec.kind == SweepKind::False)
    ms = inject_false(std::move(ms), static_cast<int>(grid_value), rng);
  else if (spec.kind == SweepKind::Missing)
    ms = remove_measurements(std::move(ms), static_cast<int>(grid_value), rng);

  PipelineConfig cfg;
  cfg.S = spec.sources;
  cfg.K = spec.K;
  cfg.P = spec.P;
  cfg.sigma = sigma;
  cfg.solver.eta = spec.eta;
  cfg.solver.epsilon = spec.epsilon;
  cfg.parallel = false;  // trials are the parallel unit

  Rng pipeline_rng(derive_seed(seed, 0x10ca, 0));
  LocalizeResult result;
  try {
    result = localize(ms, scene.receivers, cfg, pipeline_rng);
  } catch (const std::exception&) {
    out.ok = false;
    return out;
  }
  if (!result.ok) {
    out.ok = false;
    return out;
  }

  const Metrics refined = evaluate(result.estimates, result.assoc, scene, ms);
  const Metrics unrefined = evaluate(result.selected_positions, result.assoc, scene, ms);
  out.ok = true;
  out.mean_error = unrefined.mean_error;
  out.mean_error_refined = refined.mean_error;
  out.association_rate = refined.association_rate;
  out.false_to_void_rate = refined.false_to_void_rate;

  const auto pairs = all_receiver_pairs(spec.receivers);
  double crlb_sum = 0.0;
  for (const Point3& s : scene.sources)
    crlb_sum += root_crlb(s, pairs, scene.receivers, sigma > 0.0 ? sigma : 1.0);
  out.mean_root_crlb = sigma > 0.0 ? crlb_sum / spec.sources : 0.0;
  return out;
}

void run_trials_serial(const SweepSpec& spec, int grid_index, std::vector<TrialOutcome>& out) {
  for (int t = 0; t < spec.trials; ++t)
    out[static_cast<std::size_t>(t)] = run_trial(spec, grid_index, t);
}

void run_trials_omp(const SweepSpec& spec, int grid_index, std::vector<TrialOutcome>& out) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
  for (int t = 0; t < spec.trials; ++t)
    out[static_cast<std::size_t>(t)] = run_trial(spec, grid_index, t);
#else
  run_trials_serial(spec, grid_index, out);
#endif
}

}  // namespace

std::vector<double> noise_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("noise_grid: bad range");
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double v = lo + step * i;
    if (v > hi + 1e-12) break;
    grid.push_back(v);
  }
  return grid;
}

std::vector<double> count_grid(int max_count, int step) {
  if (max_count < 0 || step < 1) throw std::invalid_argument("count_grid: bad range");
  std::vector<double> grid;
  for (int n = 0; n <= max_count; n += step) grid.push_back(static_cast<double>(n));
  return grid;
}

std::vector<SweepPoint> run_sweep(const SweepSpec& spec) {
  if (spec.grid.empty()) throw std::invalid_argument("run_sweep: empty grid");
  if (spec.trials < 1) throw std::invalid_argument("run_sweep: trials must be >= 1");

  std::vector<SweepPoint> points(spec.grid.size());
  for (int g = 0; g < static_cast<int>(spec.grid.size()); ++g) {
    SweepPoint& point = points[static_cast<std::size_t>(g)];
    point.trials.resize(static_cast<std::size_t>(spec.trials));
    if (spec.parallel)
      run_trials_omp(spec, g, point.trials);
    else
      run_trials_serial(spec, g, point.trials);

    // aggregate in trial order, independent of execution order
    SweepRow& row = point.row;
    row.grid_value = spec.grid[static_cast<std::size_t>(g)];
    row.trials = spec.trials;
    int ok_count = 0;
    int void_rate_count = 0;
    double void_rate_sum = 0.0;
    for (const TrialOutcome& t : point.trials) {
      if (!t.ok) {
        ++row.failures;
        continue;
      }
      ++ok_count;
      row.mean_error += t.mean_error;
      row.mean_error_refined += t.mean_error_refined;
      row.association_rate += t.association_rate;
      row.mean_root_crlb += t.mean_root_crlb;
      if (!std::isnan(t.false_to_void_rate)) {
        void_rate_sum += t.false_to_void_rate;
        ++void_rate_count;
      }
    }
    const double denom = ok_count > 0 ? ok_count : 1;
    row.mean_error /= denom;
    row.mean_error_refined /= denom;
    row.association_rate /= denom;
    row.mean_root_crlb /= denom;
    row.false_to_void_rate = void_rate_count > 0 ? void_rate_sum / void_rate_count
                                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string csv =
      "grid_value,mean_error,mean_error_refined,association_rate,false_to_void_rate,"
      "mean_root_crlb,trials,failures\n";
  char buf[512];
  for (const SweepPoint& p : points) {
    const SweepRow& r = p.row;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.grid_value,
                  r.mean_error, r.mean_error_refined, r.association_rate, r.false_to_void_rate,
                  r.mean_root_crlb, r.trials, r.failures);
    csv += buf;
  }
  return csv;
}

}  // namespace tdoa_assoc
