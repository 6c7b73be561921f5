#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tdoa_assoc/pipeline.hpp"

namespace tdoa_assoc {

enum class SweepKind { Noise, False, Missing };

/// Monte-Carlo sweep over a noise or corruption grid. Per-trial seeds are
/// derived as hash(master seed, grid index, trial index), so every cell of
/// the output is reproducible and independent of scheduling.
struct SweepSpec {
  SweepKind kind = SweepKind::Noise;
  std::vector<double> grid;  // sigma values, or counts of false/missing rows
  int trials = 100;
  std::uint64_t seed = 1;
  int receivers = 12;
  int sources = 3;
  std::array<double, 3> room{10.0, 10.0, 2.0};
  double sigma = 0.03;  // noise level for false/missing sweeps
  int K = 3;
  int P = 3;
  double eta = 1.0;
  double epsilon = 1e-7;
  bool parallel = true;  // OpenMP over trials within a grid point
};

struct TrialOutcome {
  bool ok = false;
  double mean_error = 0.0;          // multilateration-only estimates
  double mean_error_refined = 0.0;
  double association_rate = 0.0;
  double false_to_void_rate = 0.0;  // NaN when no false rows
  double mean_root_crlb = 0.0;      // full pair set at the true sources
};

struct SweepRow {
  double grid_value = 0.0;
  double mean_error = 0.0;
  double mean_error_refined = 0.0;
  double association_rate = 0.0;
  double false_to_void_rate = 0.0;
  double mean_root_crlb = 0.0;
  int trials = 0;
  int failures = 0;
};

struct SweepPoint {
  SweepRow row;
  std::vector<TrialOutcome> trials;  // per-trial detail, trial order
};

std::vector<double> noise_grid(double lo = 0.01, double hi = 0.19, double step = 0.02);
std::vector<double> count_grid(int max_count = 22, int step = 2);

std::vector<SweepPoint> run_sweep(const SweepSpec& spec);

/// RFC-4180 style CSV with a fixed header; doubles printed with %.17g so
/// reruns with the same seed are byte-identical.
std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace tdoa_assoc
