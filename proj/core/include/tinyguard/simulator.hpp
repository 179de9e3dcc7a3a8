#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tinyguard/attacks.hpp"
#include "tinyguard/baselines.hpp"
#include "tinyguard/data.hpp"
#include "tinyguard/detector.hpp"
#include "tinyguard/model.hpp"

namespace tinyguard {

struct SyntheticSpec {
  std::size_t examples = 2500;
  std::size_t input_dim = 32;
  int classes = 10;
  double separation = 4.0;
  double noise_sigma = 0.08;

  bool operator==(const SyntheticSpec&) const = default;
};

struct DataSource {
  enum class Kind { synthetic, idx };
  Kind kind = Kind::synthetic;
  SyntheticSpec synthetic;
  std::string train_images, train_labels;
  std::string test_images, test_labels;  // optional; else test_fraction split
  double test_fraction = 0.2;

  bool operator==(const DataSource&) const = default;
};

/// Full declarative description of one experiment.
struct ExperimentConfig {
  std::string name = "run";
  std::size_t n_clients = 50;
  double byzantine_fraction = 0.2;  // in [0, 0.5)
  AttackChoice attack;
  AggregatorChoice defense;
  DetectorConfig detector;
  double dirichlet_alpha = 0.5;
  int rounds = 50;
  double eta = 0.05;
  int local_epochs = 1;
  std::size_t batch_size = 32;
  std::vector<std::size_t> hidden_widths = {64};
  DataSource data;
  std::uint64_t seed = 42;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError describing the first violated invariant.
void validate(const ExperimentConfig& config);

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::optional<double> detection_precision;  // empty when no flags raised
  std::optional<double> detection_recall;     // empty when no Byzantine clients
  int flagged_count = 0;
  std::vector<int> flagged;
  RoundTimings timings;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RoundMetrics> rounds;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::optional<double> mean_detection_precision;
  double total_runtime_ms = 0.0;
};

/// floor(fraction * n) distinct ids drawn uniformly without replacement.
std::set<int> assign_byzantine(std::size_t n, double fraction, std::uint64_t seed);

/// The federated round loop with all state: dataset, partitions, model,
/// Byzantine assignment, and aggregator history.
class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& config);

  RoundMetrics run_round();
  ExperimentResult run_all();

  /// The honest local updates every client would submit this round
  /// (before any gradient-level attack).
  std::vector<GradientUpdate> compute_local_updates();

  const ModelParams& params() const { return params_; }
  const std::set<int>& byzantine_ids() const { return byzantine_; }
  const std::vector<Partition>& partitions() const { return partitions_; }
  const Batch& test_set() const { return test_; }
  const std::vector<GradientUpdate>& last_submissions() const { return last_submissions_; }
  int round() const { return round_; }

 private:
  ExperimentConfig cfg_;
  Dataset train_;
  Batch test_;
  std::vector<Partition> partitions_;
  std::vector<Batch> client_data_;  // gathered rows, labels already flipped for
                                    // label_flip Byzantine clients
  ModelParams params_;
  std::set<int> byzantine_;
  FoolsGoldState foolsgold_;
  std::vector<GradientUpdate> last_submissions_;
  int round_ = 0;

  GradientUpdate aggregate(const std::vector<GradientUpdate>& submissions,
                           AnomalyReport* report, RoundTimings& timings);
};

ExperimentResult run_experiment(const ExperimentConfig& config);

struct ProbeRow {
  std::size_t n = 0;
  AggregatorKind defense = AggregatorKind::tinyguard;
  double median_ms = 0.0;
};

/// Timing probe on synthetic gradients (no training). For tinyguard the timed
/// region is detection after fingerprint extraction (centroid, scores,
/// normalization, threshold); other aggregators time the full call. Reports
/// the median over `repetitions` runs.
std::vector<ProbeRow> runtime_scaling_probe(const std::vector<std::size_t>& n_values,
                                            std::size_t dim,
                                            const std::vector<AggregatorKind>& kinds,
                                            int repetitions = 5,
                                            std::uint64_t seed = 1);

}  // namespace tinyguard
