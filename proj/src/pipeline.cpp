#include "tdoa_assoc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tdoa_assoc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Smallest minimal-set root-CRLB over the candidates an index set produced;
/// +inf when the set produced none.
double best_set_crlb(const PairIndexSet& set, int set_id, const CandidateSet& candidates,
                     std::span<const Point3> receivers, double sigma) {
  double best = kInf;
  for (const Candidate& c : candidates.candidates) {
    if (c.set_id != set_id) continue;
    best = std::min(best, root_crlb(c.position, set.pairs, receivers, sigma));
  }
  return best;
}

struct Attempt {
  CandidateSet candidates;
  double min_set_crlb = kInf;
  bool crlb_ok = false;
};

}  // namespace

MeasurementSet canonical_order(const MeasurementSet& ms) {
  MeasurementSet out = ms;
  std::stable_sort(out.measurements.begin(), out.measurements.end(),
                   [](const TdoaMeasurement& a, const TdoaMeasurement& b) {
                     if (a.pair.k != b.pair.k) return a.pair.k < b.pair.k;
                     if (a.pair.l != b.pair.l) return a.pair.l < b.pair.l;
                     return a.value < b.value;
                   });
  return out;
}

LocalizeResult localize(const MeasurementSet& ms_in, const std::vector<Point3>& receivers,
                        const PipelineConfig& cfg, Rng& rng) {
  if (ms_in.size() == 0) throw std::invalid_argument("localize: empty measurement set");
  if (receivers.size() < 4) throw std::invalid_argument("localize: need >= 4 receivers");
  if (cfg.S < 1 || cfg.K < 1 || cfg.P < 1) throw std::invalid_argument("localize: bad config");

  const MeasurementSet ms = canonical_order(ms_in);
  const int R = static_cast<int>(receivers.size());

  MlatConfig mlat = cfg.mlat;
  mlat.P = cfg.P;
  mlat.accept_tol = accept_tol_for_sigma(cfg.sigma);
  mlat.parallel = cfg.parallel;

  LocalizeResult result;
  result.diag.accept_tol = mlat.accept_tol;

  const std::uint64_t attempt_base = rng.next_u64();
  Attempt best_attempt;
  bool have_attempt = false;

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    result.diag.retries = attempt;
    Rng attempt_rng(derive_seed(attempt_base, 0x1d5e, static_cast<std::uint64_t>(attempt)));
    const auto pair_sets = choose_pair_sets(R, cfg.K, cfg.P, attempt_rng);
    Attempt cur;
    cur.candidates = build_candidates(ms, pair_sets, receivers, mlat);
    if (cur.candidates.size() < cfg.S) continue;

    if (cfg.sigma > 0.0) {
      for (int i = 0; i < static_cast<int>(pair_sets.size()); ++i) {
        const double crlb =
            best_set_crlb(pair_sets[static_cast<std::size_t>(i)], i, cur.candidates, receivers, cfg.sigma);
        cur.min_set_crlb = std::min(cur.min_set_crlb, crlb);
      }
      cur.crlb_ok = cur.min_set_crlb <= cfg.crlb_retry_threshold;
    } else {
      cur.min_set_crlb = 0.0;
      cur.crlb_ok = true;
    }

    if (!have_attempt || (cur.crlb_ok && !best_attempt.crlb_ok) ||
        (cur.crlb_ok == best_attempt.crlb_ok && cur.min_set_crlb < best_attempt.min_set_crlb)) {
      best_attempt = std::move(cur);
      have_attempt = true;
      result.diag.skipped_sets = best_attempt.candidates.skipped_sets;
    }
    if (have_attempt && best_attempt.crlb_ok) break;
  }

  if (!have_attempt) {
    result.ok = false;
    result.diag.ok = false;
    result.diag.failure = "no usable candidate set after retries";
    return result;
  }
  result.diag.crlb_screen_exhausted = !best_attempt.crlb_ok;
  result.diag.min_set_crlb = best_attempt.min_set_crlb;
  result.diag.candidate_count = best_attempt.candidates.size();

  SolverConfig solver = cfg.solver;
  solver.R_tilde = static_cast<double>(pair_count(R));
  solver.parallel = cfg.parallel;

  // the first pass only has to rank candidates; selection is stable well
  // before the tie-level convergence the reassociation needs
  SolverConfig selection_solver = solver;
  selection_solver.max_iter = std::min(solver.max_iter, 1500);

  const CostMatrix cm = build_cost(best_attempt.candidates, ms, receivers);
  SinkhornResult solved = sinkhorn_solve(cm, selection_solver);
  const AssociationResult first_pass = extract_selection(solved.plan, cfg.S);
  result.diag.association = std::move(solved.diag);

  result.selected_positions.reserve(static_cast<std::size_t>(cfg.S));
  for (int col : first_pass.selected)
    result.selected_positions.push_back(
        best_attempt.candidates.candidates[static_cast<std::size_t>(col)].position);

  ReassociationResult re = reassociate(ms, result.selected_positions, receivers, solver);
  result.assoc = std::move(re.assoc);
  result.diag.reassociation = std::move(re.diag);

  // refine each selected source with its assigned measurements
  result.estimates.resize(static_cast<std::size_t>(cfg.S));
  result.diag.refine_converged.resize(static_cast<std::size_t>(cfg.S), false);
  for (int s = 0; s < cfg.S; ++s) {
    std::vector<TdoaMeasurement> assigned;
    for (int i = 0; i < ms.size(); ++i)
      if (result.assoc.assign[static_cast<std::size_t>(i)] == s)
        assigned.push_back(ms.measurements[static_cast<std::size_t>(i)]);
    const auto refined = refine_position(result.selected_positions[static_cast<std::size_t>(s)],
                                         assigned, receivers, cfg.refine);
    result.estimates[static_cast<std::size_t>(s)] = refined.position;
    result.diag.refine_converged[static_cast<std::size_t>(s)] = refined.converged;
  }

  result.ok = true;
  result.diag.ok = true;
  return result;
}

Metrics evaluate(const std::vector<Point3>& estimates, const AssociationResult& assoc,
                 const Scene& scene, const MeasurementSet& ms_in) {
  const MeasurementSet ms = canonical_order(ms_in);
  if (!ms.fully_labeled()) throw std::invalid_argument("evaluate: measurement truth tags missing");
  if (estimates.size() != scene.sources.size())
    throw std::invalid_argument("evaluate: estimate count does not match source count");
  if (static_cast<int>(assoc.assign.size()) != ms.size())
    throw std::invalid_argument("evaluate: assignment size does not match measurement count");

  const int S = static_cast<int>(estimates.size());
  if (S > 8) throw std::invalid_argument("evaluate: permutation matching supports S <= 8");

  // minimum-total-distance matching over all permutations: match[s] is the
  // true source index for estimate slot s
  std::vector<int> perm(static_cast<std::size_t>(S));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> match = perm;
  double best_total = kInf;
  do {
    double total = 0.0;
    for (int s = 0; s < S; ++s)
      total += distance(estimates[static_cast<std::size_t>(s)],
                        scene.sources[static_cast<std::size_t>(perm[static_cast<std::size_t>(s)])]);
    if (total < best_total) {
      best_total = total;
      match = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Metrics metrics;
  metrics.matched_source = match;
  metrics.source_errors.resize(static_cast<std::size_t>(S), 0.0);
  for (int s = 0; s < S; ++s)
    metrics.source_errors[static_cast<std::size_t>(s)] =
        distance(estimates[static_cast<std::size_t>(s)],
                 scene.sources[static_cast<std::size_t>(match[static_cast<std::size_t>(s)])]);
  metrics.mean_error =
      std::accumulate(metrics.source_errors.begin(), metrics.source_errors.end(), 0.0) /
      std::max(1, S);

  int correct = 0;
  int false_rows = 0;
  int false_to_void = 0;
  for (int i = 0; i < ms.size(); ++i) {
    const int truth = ms.measurements[static_cast<std::size_t>(i)].truth.value();
    const int slot = assoc.assign[static_cast<std::size_t>(i)];
    if (truth == kFalseMeasurement) {
      ++false_rows;
      if (slot == kVoid) {
        ++false_to_void;
        ++correct;
      }
    } else if (slot != kVoid && match[static_cast<std::size_t>(slot)] == truth) {
      ++correct;
    }
  }
  metrics.association_rate = ms.size() > 0 ? static_cast<double>(correct) / ms.size() : 0.0;
  metrics.false_to_void_rate = false_rows > 0
                                   ? static_cast<double>(false_to_void) / false_rows
                                   : std::numeric_limits<double>::quiet_NaN();
  return metrics;
}

}  // namespace tdoa_assoc
