#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tinyguard/harness.hpp"

namespace fs = std::filesystem;
using namespace tinyguard;

namespace {

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) out.push_back(std::stod(token));
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(csv)) out.push_back(static_cast<std::size_t>(v));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, int seeds) {
  const ExperimentConfig base = parse_experiment_file(config_path);
  int failures = 0;
  for (int k = 0; k < seeds; ++k) {
    ExperimentConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(k);
    try {
      const ExperimentResult result = run_experiment(cfg);
      const fs::path dir = fs::path(out_dir) / cfg.name / ("seed" + std::to_string(k));
      write_experiment_outputs(result, dir);
      std::cout << cfg.name << " seed" << k << ": final_accuracy=" << fmt(result.final_accuracy);
      if (result.mean_detection_precision) {
        std::cout << " mean_precision=" << fmt(*result.mean_detection_precision);
      }
      std::cout << " runtime_ms=" << fmt(result.total_runtime_ms) << "\n";
      std::cout << "  wrote " << dir.string() << "\n";
    } catch (const std::exception& e) {
      std::cerr << cfg.name << " seed" << k << " failed: " << e.what() << "\n";
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_matrix(const std::string& config_path, const std::string& out_override, int seeds,
               int parallel) {
  const RunManifest manifest = parse_manifest_file(config_path);
  const fs::path out = out_override.empty() ? fs::path(manifest.output_dir)
                                            : fs::path(out_override);
  const MatrixSummary summary = run_matrix(manifest, out, seeds, parallel);
  std::cout << "matrix: " << summary.executed << " executed, " << summary.skipped
            << " skipped, " << summary.failed << " failed\n";
  for (const auto& row : summary.rows) {
    std::cout << "  " << row.entry << " [" << row.attack << " vs " << row.defense
              << "]: accuracy=" << fmt(row.mean_final_accuracy);
    if (row.mean_detection_precision) {
      std::cout << " precision=" << fmt(*row.mean_detection_precision);
    }
    std::cout << "\n";
  }
  for (const auto& err : summary.errors) std::cerr << "  error: " << err << "\n";
  std::cout << "summary: " << (out / "summary.csv").string() << "\n";
  return summary.failed == 0 ? 0 : 1;
}

int cmd_pareto(const std::string& config_path, const std::string& out_dir,
               const std::string& lambdas, int seeds) {
  const ExperimentConfig base = parse_experiment_file(config_path);
  const ParetoSweep sweep = run_pareto_sweep(base, parse_double_list(lambdas), seeds);
  write_pareto_outputs(sweep, out_dir);
  std::cout << "lambda_s  fingerprint_mse  attack_alignment\n";
  for (const auto& row : sweep.frontier) {
    std::printf("%-9g %-16.6g %-16.4f\n", row.lambda_s, row.fingerprint_mse,
                row.attack_alignment);
  }
  std::cout << "honest_mse_median=" << sweep.honest_mse_median << "\n";
  std::cout << "wrote " << out_dir << "/pareto_{runs,frontier}.csv\n";
  return 0;
}

int cmd_ablation(const std::string& config_path, const std::string& out_dir,
                 const std::string& axis_name, const std::string& values, int seeds) {
  const ExperimentConfig base = parse_experiment_file(config_path);
  const AblationAxis axis = ablation_axis_from_string(axis_name);
  const auto rows = run_ablation(base, axis, parse_double_list(values), seeds);
  const fs::path file = fs::path(out_dir) / ("ablation_" + to_string(axis) + ".csv");
  write_ablation_csv(axis, rows, file);
  std::cout << to_string(axis) << "  accuracy  precision  runtime_ms\n";
  for (const auto& r : rows) {
    std::cout << r.value << "  " << fmt(r.final_accuracy) << "  "
              << (r.detection_precision ? fmt(*r.detection_precision) : "-") << "  "
              << fmt(r.runtime_ms) << "\n";
  }
  std::cout << "wrote " << file.string() << "\n";
  return 0;
}

int cmd_probe(const std::string& out_dir, const std::string& n_csv, std::size_t dim,
              const std::string& defenses, int reps, std::uint64_t seed) {
  std::vector<AggregatorKind> kinds;
  std::stringstream ss(defenses);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) kinds.push_back(aggregator_kind_from_string(token));
  }
  const auto rows = runtime_scaling_probe(parse_size_list(n_csv), dim, kinds, reps, seed);
  const fs::path file = fs::path(out_dir) / "probe_runtime.csv";
  write_probe_csv(rows, file);
  std::cout << "n  defense  median_ms\n";
  for (const auto& r : rows) {
    std::cout << r.n << "  " << to_string(r.defense) << "  " << r.median_ms << "\n";
  }
  std::cout << "wrote " << file.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyguard: byzantine-robust federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  int seeds = 1, parallel = 1;

  auto* run = app.add_subcommand("run", "run a single experiment config");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seeds", seeds, "seeds (repetitions) to run");

  auto* matrix = app.add_subcommand("matrix", "run every entry of a manifest");
  std::string matrix_out;
  matrix->add_option("--config", config_path, "manifest file")->required();
  matrix->add_option("--out", matrix_out, "override the manifest output_dir");
  int matrix_seeds = 0;
  matrix->add_option("--seeds", matrix_seeds, "override the manifest repetitions");
  matrix->add_option("--parallel", parallel, "worker threads for entries");

  auto* pareto = app.add_subcommand("pareto", "adaptive-attack stealth sweep");
  std::string lambdas = "0.1,1,10,100,1000,10000";
  int pareto_seeds = 5;
  pareto->add_option("--config", config_path, "base experiment config")->required();
  pareto->add_option("--out", out_dir, "output directory");
  pareto->add_option("--lambdas", lambdas, "comma-separated lambda_s values");
  pareto->add_option("--seeds", pareto_seeds, "seeds per lambda_s");

  auto* ablation = app.add_subcommand("ablation", "sweep one config axis");
  std::string axis, values;
  int ablation_seeds = 5;
  ablation->add_option("--config", config_path, "base experiment config")->required();
  ablation->add_option("--axis", axis, "n_clients | lambda | dirichlet_alpha")->required();
  ablation->add_option("--values", values, "comma-separated axis values")->required();
  ablation->add_option("--out", out_dir, "output directory");
  ablation->add_option("--seeds", ablation_seeds, "seeds per value");

  auto* probe = app.add_subcommand("probe-runtime", "aggregator timing probe");
  std::string n_csv = "50,100,200", defenses = "tinyguard,krum";
  std::size_t dim = 50890;
  int reps = 5;
  std::uint64_t probe_seed = 1;
  probe->add_option("--out", out_dir, "output directory");
  probe->add_option("--n", n_csv, "comma-separated client counts");
  probe->add_option("--dim", dim, "gradient dimension");
  probe->add_option("--defenses", defenses, "comma-separated aggregator kinds");
  probe->add_option("--reps", reps, "repetitions per measurement");
  probe->add_option("--seed", probe_seed, "probe seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, seeds);
    if (matrix->parsed()) return cmd_matrix(config_path, matrix_out, matrix_seeds, parallel);
    if (pareto->parsed()) return cmd_pareto(config_path, out_dir, lambdas, pareto_seeds);
    if (ablation->parsed()) {
      return cmd_ablation(config_path, out_dir, axis, values, ablation_seeds);
    }
    if (probe->parsed()) return cmd_probe(out_dir, n_csv, dim, defenses, reps, probe_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
