#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdoa_assoc/experiment.hpp"
#include "tdoa_assoc/parallel.hpp"
#include "tdoa_assoc/pipeline.hpp"
#include "tdoa_assoc/serialize.hpp"

using namespace tdoa_assoc;

namespace {

struct SimulateOptions {
  std::string config_path;
  std::string out_path;
  int receivers = 12;
  int sources = 3;
  std::vector<double> room = {10.0, 10.0, 2.0};
  double sigma = 0.03;
  int n_false = 0;
  int n_missing = 0;
  std::uint64_t seed = 1;
};

struct LocalizeOptions {
  std::string input_path;
  std::string out_path;
  double sigma = 0.03;
  int k_sets = 3;
  double eta = 1.0;
  double epsilon = 1e-7;
  int sources = 0;  // 0: use the ground-truth count from the input
  std::uint64_t seed = 1;
};

struct ExperimentOptions {
  std::string sweep = "noise";
  std::string out_path;
  int trials = 100;
  std::uint64_t seed = 1;
  int receivers = 12;
  int sources = 3;
  std::vector<double> room = {10.0, 10.0, 2.0};
  double sigma = 0.03;
  double sigma_step = 0.02;
  int k_sets = 3;
  double eta = 1.0;
  double epsilon = 1e-7;
};

int run_simulate(const SimulateOptions& opt) {
  SimulateOptions cfg = opt;
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) {
      std::cerr << "error: cannot read config " << opt.config_path << "\n";
      return 1;
    }
    nlohmann::json j;
    try {
      in >> j;
      cfg.receivers = j.value("receivers", cfg.receivers);
      cfg.sources = j.value("sources", cfg.sources);
      if (j.contains("room")) cfg.room = j.at("room").get<std::vector<double>>();
      cfg.sigma = j.value("sigma", cfg.sigma);
      cfg.n_false = j.value("false", cfg.n_false);
      cfg.n_missing = j.value("missing", cfg.n_missing);
      cfg.seed = j.value("seed", cfg.seed);
    } catch (const std::exception& e) {
      std::cerr << "error: bad config: " << e.what() << "\n";
      return 1;
    }
  }
  if (cfg.room.size() != 3) {
    std::cerr << "error: --room expects three dimensions\n";
    return 1;
  }
  try {
    Rng rng(cfg.seed);
    const Scene scene =
        generate_scene(cfg.receivers, cfg.sources, {cfg.room[0], cfg.room[1], cfg.room[2]}, rng);
    MeasurementSet ms = synthesize_measurements(scene, NoiseSpec{cfg.sigma}, rng);
    if (cfg.n_false > 0) ms = inject_false(std::move(ms), cfg.n_false, rng);
    if (cfg.n_missing > 0) ms = remove_measurements(std::move(ms), cfg.n_missing, rng);
    const auto doc = scene_to_json(scene, ms);
    if (cfg.out_path.empty() || cfg.out_path == "-") {
      std::cout << doc.dump(2) << "\n";
    } else {
      std::ofstream out(cfg.out_path);
      if (!out) {
        std::cerr << "error: cannot write " << cfg.out_path << "\n";
        return 1;
      }
      out << doc.dump(2) << "\n";
    }
    std::fprintf(stderr, "simulated R=%d S=%d |T|=%d sigma=%g seed=%llu\n", cfg.receivers,
                 cfg.sources, ms.size(), cfg.sigma,
                 static_cast<unsigned long long>(cfg.seed));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_localize(const LocalizeOptions& opt) {
  nlohmann::json input;
  {
    std::ifstream in(opt.input_path);
    if (!in) {
      std::cerr << "error: cannot read " << opt.input_path << "\n";
      return 2;
    }
    try {
      in >> input;
    } catch (const std::exception& e) {
      std::cerr << "error: malformed JSON: " << e.what() << "\n";
      return 2;
    }
  }
  Scene scene;
  MeasurementSet ms;
  try {
    std::tie(scene, ms) = scene_from_json(input);
  } catch (const std::exception& e) {
    std::cerr << "error: malformed scene document: " << e.what() << "\n";
    return 2;
  }

  PipelineConfig cfg;
  cfg.S = opt.sources > 0 ? opt.sources : static_cast<int>(scene.sources.size());
  if (cfg.S < 1) {
    std::cerr << "error: source count unknown; pass --sources\n";
    return 2;
  }
  cfg.K = opt.k_sets;
  cfg.sigma = opt.sigma;
  cfg.solver.eta = opt.eta;
  cfg.solver.epsilon = opt.epsilon;

  LocalizeResult result;
  try {
    Rng rng(opt.seed);
    result = localize(ms, scene.receivers, cfg, rng);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  std::optional<Metrics> metrics;
  if (result.ok && ms.fully_labeled() && !scene.sources.empty() &&
      static_cast<int>(scene.sources.size()) == cfg.S)
    metrics = evaluate(result.estimates, result.assoc, scene, ms);

  const auto doc = result_to_json(result, metrics);
  if (opt.out_path.empty() || opt.out_path == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::ofstream out(opt.out_path);
    if (!out) {
      std::cerr << "error: cannot write " << opt.out_path << "\n";
      return 1;
    }
    out << doc.dump(2) << "\n";
  }

  if (!result.ok) {
    std::cerr << "localization failed: " << result.diag.failure << "\n";
    return 3;
  }
  std::fprintf(stderr, "estimates:\n");
  for (const Point3& p : result.estimates)
    std::fprintf(stderr, "  (%.4f, %.4f, %.4f)\n", p.x, p.y, p.z);
  if (metrics)
    std::fprintf(stderr, "mean error %.6g m, association rate %.4f\n", metrics->mean_error,
                 metrics->association_rate);
  return 0;
}

int run_experiment(const ExperimentOptions& opt) {
  SweepSpec spec;
  if (opt.sweep == "noise") {
    spec.kind = SweepKind::Noise;
    spec.grid = noise_grid(0.01, 0.19, opt.sigma_step);
  } else if (opt.sweep == "false") {
    spec.kind = SweepKind::False;
    spec.grid = count_grid();
  } else if (opt.sweep == "missing") {
    spec.kind = SweepKind::Missing;
    spec.grid = count_grid();
  } else {
    std::cerr << "error: --sweep must be noise, false or missing\n";
    return 1;
  }
  spec.trials = opt.trials;
  spec.seed = opt.seed;
  spec.receivers = opt.receivers;
  spec.sources = opt.sources;
  if (opt.room.size() != 3) {
    std::cerr << "error: --room expects three dimensions\n";
    return 1;
  }
  spec.room = {opt.room[0], opt.room[1], opt.room[2]};
  spec.sigma = opt.sigma;
  spec.K = opt.k_sets;
  spec.eta = opt.eta;
  spec.epsilon = opt.epsilon;

  try {
    const auto points = run_sweep(spec);
    const std::string csv = sweep_csv(points);
    if (opt.out_path.empty() || opt.out_path == "-") {
      std::cout << csv;
    } else {
      std::ofstream out(opt.out_path, std::ios::binary);
      if (!out) {
        std::cerr << "error: cannot write " << opt.out_path << "\n";
        return 1;
      }
      out << csv;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Joint multi-source localization and TDOA data association.\n"
      "Measurement values are in meters (propagation speed times seconds).\n"
      "Set TDOA_ASSOC_THREADS to cap worker threads."};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand(
      "simulate", "Generate a random scene and its TDOA measurements as JSON");
  simulate->add_option("--config", sim.config_path, "JSON config file (flags override)");
  simulate->add_option("--receivers", sim.receivers, "receiver count (>= 4)");
  simulate->add_option("--sources", sim.sources, "source count");
  simulate->add_option("--room", sim.room, "room dimensions Lx Ly Lz in meters")->expected(3);
  simulate->add_option("--sigma", sim.sigma, "TDOA noise standard deviation in meters");
  simulate->add_option("--false", sim.n_false, "number of injected false measurements");
  simulate->add_option("--missing", sim.n_missing, "number of deleted measurements");
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--out", sim.out_path, "output path ('-' for stdout)");

  LocalizeOptions loc;
  auto* localize_cmd = app.add_subcommand(
      "localize", "Localize sources from a scene JSON document; writes a result JSON");
  localize_cmd->add_option("input", loc.input_path, "scene JSON path")->required();
  localize_cmd->add_option("--sigma", loc.sigma, "assumed noise level in meters");
  localize_cmd->add_option("--sources", loc.sources, "number of sources to estimate");
  localize_cmd->add_option("--k-sets", loc.k_sets, "number of receiver-pair index sets");
  localize_cmd->add_option("--eta", loc.eta, "sparsity weight");
  localize_cmd->add_option("--epsilon", loc.epsilon, "entropy weight");
  localize_cmd->add_option("--seed", loc.seed, "random seed for the index-set draws");
  localize_cmd->add_option("--out", loc.out_path, "result JSON path ('-' for stdout)");

  ExperimentOptions exp;
  auto* experiment = app.add_subcommand(
      "experiment",
      "Monte-Carlo sweep; writes CSV with columns grid_value, mean_error (unrefined), "
      "mean_error_refined, association_rate, false_to_void_rate (nan when not "
      "applicable), mean_root_crlb, trials, failures");
  experiment->add_option("--sweep", exp.sweep, "noise | false | missing")->required();
  experiment->add_option("--trials", exp.trials, "trials per grid point");
  experiment->add_option("--seed", exp.seed, "master seed; trial seeds derive from it");
  experiment->add_option("--receivers", exp.receivers, "receiver count");
  experiment->add_option("--sources", exp.sources, "source count");
  experiment->add_option("--room", exp.room, "room dimensions Lx Ly Lz")->expected(3);
  experiment->add_option("--sigma", exp.sigma,
                         "noise level for false/missing sweeps (meters)");
  experiment->add_option("--sigma-step", exp.sigma_step, "noise sweep grid step");
  experiment->add_option("--k-sets", exp.k_sets, "number of receiver-pair index sets");
  experiment->add_option("--eta", exp.eta, "sparsity weight");
  experiment->add_option("--epsilon", exp.epsilon, "entropy weight");
  experiment->add_option("--out", exp.out_path, "CSV path ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) return run_simulate(sim);
  if (localize_cmd->parsed()) return run_localize(loc);
  if (experiment->parsed()) return run_experiment(exp);
  return 1;
}
