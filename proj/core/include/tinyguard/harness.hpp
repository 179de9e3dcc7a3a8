#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinyguard/simulator.hpp"

namespace tinyguard {

/// A named batch of experiments parsed from one manifest file.
struct RunManifest {
  std::string output_dir = "out";
  int repetitions = 1;  // seeds per entry
  std::vector<ExperimentConfig> entries;

  bool operator==(const RunManifest&) const = default;
};

/// Manifest grammar: flat `key = value` lines, '#' comments, dotted key
/// paths. Top-level keys are `output_dir` and `repetitions`; `base.<key>`
/// applies to every entry; `entry.<name>.<key>` defines and configures one
/// experiment. Unknown keys, duplicate keys, and invariant violations are
/// rejected with line context.
RunManifest parse_manifest_text(std::string_view text, std::string_view source_name);
RunManifest parse_manifest_file(const std::filesystem::path& path);

/// Single-experiment config: the same keys without prefixes.
ExperimentConfig parse_experiment_text(std::string_view text, std::string_view source_name);
ExperimentConfig parse_experiment_file(const std::filesystem::path& path);

/// Canonical echo of every field (defaults included), one key per line.
std::string serialize_config_kv(const ExperimentConfig& config);
std::string serialize_manifest(const RunManifest& manifest);

/// Deterministic result document: config echo plus the per-round metrics.
/// Wall-clock timings are excluded here (they live in the rounds CSV) so two
/// runs of the same config and seed produce byte-identical files.
std::string result_json(const ExperimentResult& result);

/// Flat per-round CSV: round, accuracy, loss, precision, recall, flags, and
/// per-phase timings.
std::string rounds_csv(const ExperimentResult& result);

/// Writes result.json, rounds.csv, config.kv, and runtime.txt under dir.
void write_experiment_outputs(const ExperimentResult& result,
                              const std::filesystem::path& dir);

struct EntrySummaryRow {
  std::string entry;
  std::string attack;
  std::string defense;
  int seeds = 0;
  int executed = 0;
  int skipped = 0;
  int failed = 0;
  double mean_final_accuracy = 0.0;
  std::optional<double> mean_detection_precision;
  double mean_runtime_ms = 0.0;
};

struct MatrixSummary {
  std::vector<EntrySummaryRow> rows;
  int executed = 0;
  int skipped = 0;
  int failed = 0;
  std::vector<std::string> errors;
};

/// Runs every entry x seed, writing one directory per experiment under
/// out_dir/<entry>/seed<k>/ plus an aggregated summary.csv. Experiments whose
/// result.json already exists are skipped (resume). Failures are recorded and
/// the rest of the matrix continues. seeds_override > 0 replaces the
/// manifest's repetitions; parallel > 1 runs experiments on worker threads.
MatrixSummary run_matrix(const RunManifest& manifest, const std::filesystem::path& out_dir,
                         int seeds_override = 0, int parallel = 1);

struct ParetoRow {
  double lambda_s = 0.0;
  double fingerprint_mse = 0.0;
  double attack_alignment = 0.0;
  std::uint64_t seed = 0;
};

struct ParetoSweep {
  std::vector<ParetoRow> runs;      // one row per (lambda_s, seed)
  std::vector<ParetoRow> frontier;  // seed-averaged, ascending lambda_s
  double honest_mse_median = 0.0;   // honest population reference, seed-averaged
};

/// Sweeps the stealth weight of the adaptive attack against the honest
/// update population of the base config (fresh data, model, and Byzantine
/// assignment per seed). Requires attack.kind = adaptive_pgd.
ParetoSweep run_pareto_sweep(const ExperimentConfig& base,
                             std::vector<double> lambda_values, int seeds);

/// pareto_runs.csv, pareto_frontier.csv, and pareto_meta.json under dir.
void write_pareto_outputs(const ParetoSweep& sweep, const std::filesystem::path& dir);

enum class AblationAxis { n_clients, lambda, dirichlet_alpha };

AblationAxis ablation_axis_from_string(const std::string& name);
std::string to_string(AblationAxis axis);

struct AblationRow {
  double value = 0.0;
  double final_accuracy = 0.0;
  std::optional<double> detection_precision;
  double runtime_ms = 0.0;
};

/// Per axis value: seed-averaged final accuracy, detection precision, and
/// runtime, mirroring the scalability / threshold / heterogeneity tables.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, AblationAxis axis,
                                      const std::vector<double>& values, int seeds);

void write_ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows,
                        const std::filesystem::path& file);

void write_probe_csv(const std::vector<ProbeRow>& rows, const std::filesystem::path& file);

}  // namespace tinyguard
