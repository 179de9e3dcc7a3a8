#include "tinyguard/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tinyguard/errors.hpp"
#include "tinyguard/rng.hpp"
#include "tinyguard/robust.hpp"

namespace tinyguard {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

int resolved_krum_f(const AggregatorChoice& choice, std::size_t n) {
  if (choice.krum_f >= 0) return choice.krum_f;
  return static_cast<int>(std::ceil(0.2 * static_cast<double>(n)));
}

int resolved_multikrum_m(const AggregatorChoice& choice, std::size_t n, int f) {
  if (choice.multikrum_m >= 1) return choice.multikrum_m;
  return std::max(1, static_cast<int>(n) - f);
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.n_clients < 1) throw ConfigError("need at least one client");
  if (!(c.byzantine_fraction >= 0.0) || c.byzantine_fraction >= 0.5) {
    throw ConfigError("byzantine_fraction must lie in [0, 0.5): the threat model "
                      "assumes fewer than half the clients are Byzantine");
  }
  if (c.rounds < 0) throw ConfigError("rounds must be non-negative");
  if (!(c.eta > 0.0)) throw ConfigError("eta must be positive");
  if (c.local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(c.dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha must be positive");
  if (!(c.detector.lambda > 0.0)) throw ConfigError("detector.lambda must be positive");
  if (!(c.detector.epsilon > 0.0)) throw ConfigError("detector.epsilon must be positive");
  if (!(c.attack.noise_sigma > 0.0)) throw ConfigError("attack.sigma must be positive");
  if (!(c.attack.flip_scale > 0.0)) throw ConfigError("attack.alpha must be positive");
  if (!(c.attack.scale_factor > 0.0)) throw ConfigError("attack.beta must be positive");
  if (!(c.attack.pgd.lambda_s >= 0.0)) throw ConfigError("attack.lambda_s must be >= 0");
  if (!(c.attack.pgd.lambda_a > 0.0)) throw ConfigError("attack.lambda_a must be positive");
  if (c.attack.pgd.steps < 1) throw ConfigError("attack.steps must be at least 1");
  if (c.attack.pgd.subsample < 1) throw ConfigError("attack.subsample must be positive");
  if (!(c.attack.pgd.decay > 0.0) || c.attack.pgd.decay > 1.0) {
    throw ConfigError("attack.decay must lie in (0, 1]");
  }
  if (!(c.defense.trim_fraction >= 0.0) || c.defense.trim_fraction >= 0.5) {
    throw ConfigError("defense.trim_fraction must lie in [0, 0.5)");
  }
  if (c.defense.kind == AggregatorKind::krum ||
      c.defense.kind == AggregatorKind::multikrum) {
    const int f = resolved_krum_f(c.defense, c.n_clients);
    if (c.n_clients < 2 * static_cast<std::size_t>(f) + 3) {
      throw ConfigError("krum requires n >= 2f + 3 for f = " + std::to_string(f));
    }
  }
  if (c.data.kind == DataSource::Kind::synthetic) {
    if (c.data.synthetic.examples < 1 || c.data.synthetic.input_dim < 1 ||
        c.data.synthetic.classes < 1) {
      throw ConfigError("synthetic dataset needs positive counts");
    }
  } else {
    if (c.data.train_images.empty() || c.data.train_labels.empty()) {
      throw ConfigError("idx data source needs train_images and train_labels paths");
    }
  }
  if (!(c.data.test_fraction >= 0.0) || c.data.test_fraction >= 1.0) {
    throw ConfigError("data.test_fraction must lie in [0, 1)");
  }
  if (c.attack.kind == AttackKind::label_flip) {
    const int classes = c.data.kind == DataSource::Kind::synthetic
                            ? c.data.synthetic.classes
                            : 10;
    if (classes < 2) throw ConfigError("label flipping needs at least two classes");
  }
}

std::set<int> assign_byzantine(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0) || fraction >= 0.5) {
    throw ConfigError("byzantine fraction must lie in [0, 0.5)");
  }
  const auto count =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  Rng rng(seed);
  std::set<int> ids;
  for (std::size_t idx : rng.sample_without_replacement(n, count)) {
    ids.insert(static_cast<int>(idx));
  }
  return ids;
}

Simulation::Simulation(const ExperimentConfig& config)
    : cfg_(config), foolsgold_(config.defense.foolsgold_window) {
  validate(cfg_);

  Dataset full;
  bool have_test_files = false;
  if (cfg_.data.kind == DataSource::Kind::synthetic) {
    const auto& s = cfg_.data.synthetic;
    full = generate_synthetic(s.examples, s.input_dim, s.classes,
                              derive_seed(cfg_.seed, "data"), s.separation,
                              s.noise_sigma);
  } else {
    full = load_idx(cfg_.data.train_images, cfg_.data.train_labels);
    have_test_files = !cfg_.data.test_images.empty() && !cfg_.data.test_labels.empty();
  }

  if (have_test_files) {
    train_ = std::move(full);
    const Dataset test_ds = load_idx(cfg_.data.test_images, cfg_.data.test_labels);
    std::vector<std::size_t> all(test_ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    test_ = make_batch(test_ds, all);
  } else {
    // Deterministic held-out split of the source dataset.
    std::vector<std::size_t> order(full.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng(derive_seed(cfg_.seed, "split"));
    split_rng.shuffle(order);
    const auto test_count = static_cast<std::size_t>(
        std::floor(cfg_.data.test_fraction * static_cast<double>(full.size())));
    std::vector<std::size_t> test_idx(order.begin(),
                                      order.begin() + static_cast<std::ptrdiff_t>(test_count));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(test_count),
                                       order.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    test_ = make_batch(full, test_idx);

    train_.input_dim = full.input_dim;
    train_.num_classes = full.num_classes;
    for (std::size_t e : train_idx) {
      const double* row = full.inputs.data() + e * full.input_dim;
      train_.inputs.insert(train_.inputs.end(), row, row + full.input_dim);
      train_.labels.push_back(full.labels[e]);
    }
  }
  if (train_.size() < cfg_.n_clients) {
    throw ConfigError("training split smaller than the client count");
  }
  if (test_.size() == 0) {
    throw ConfigError("empty test split; lower data.test_fraction or provide test files");
  }

  partitions_ = dirichlet_partition(train_, cfg_.n_clients, cfg_.dirichlet_alpha,
                                    derive_seed(cfg_.seed, "partition"));
  byzantine_ = assign_byzantine(cfg_.n_clients, cfg_.byzantine_fraction,
                                derive_seed(cfg_.seed, "byzantine"));

  std::vector<std::size_t> widths;
  widths.push_back(train_.input_dim);
  for (std::size_t h : cfg_.hidden_widths) widths.push_back(h);
  widths.push_back(static_cast<std::size_t>(train_.num_classes));
  params_ = init_params(widths, derive_seed(cfg_.seed, "init"));

  client_data_.resize(cfg_.n_clients);
  for (std::size_t i = 0; i < cfg_.n_clients; ++i) {
    const bool flip = cfg_.attack.kind == AttackKind::label_flip &&
                      byzantine_.count(static_cast<int>(i)) > 0;
    if (flip) {
      const auto flipped = flip_labels(train_, partitions_[i]);
      client_data_[i] = make_batch(train_, partitions_[i].example_indices, &flipped);
    } else {
      client_data_[i] = make_batch(train_, partitions_[i].example_indices);
    }
  }
}

std::vector<GradientUpdate> Simulation::compute_local_updates() {
  std::vector<GradientUpdate> updates;
  updates.reserve(cfg_.n_clients);
  for (std::size_t i = 0; i < cfg_.n_clients; ++i) {
    const Batch& local = client_data_[i];
    ModelParams w = params_;
    Rng rng(derive_seed(cfg_.seed, "round/" + std::to_string(round_) + "/client/" +
                                       std::to_string(i)));
    std::vector<std::size_t> order(local.size());
    for (int epoch = 0; epoch < cfg_.local_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg_.batch_size);
        Batch mb;
        mb.input_dim = local.input_dim;
        mb.inputs.reserve((stop - start) * local.input_dim);
        mb.labels.reserve(stop - start);
        for (std::size_t r = start; r < stop; ++r) {
          const auto row = local.row(order[r]);
          mb.inputs.insert(mb.inputs.end(), row.begin(), row.end());
          mb.labels.push_back(local.labels[order[r]]);
        }
        const GradientUpdate g = compute_gradient(w, mb);
        for (std::size_t j = 0; j < w.values.size(); ++j) {
          w.values[j] -= cfg_.eta * g.values[j];
        }
      }
    }
    // Submit the accumulated parameter delta divided by eta: the gradient
    // direction the server folds into w <- w - eta * agg.
    GradientUpdate u;
    u.layout = params_.layout;
    u.client_id = static_cast<int>(i);
    u.sample_count = local.size();
    u.values.resize(params_.values.size());
    for (std::size_t j = 0; j < u.values.size(); ++j) {
      u.values[j] = (params_.values[j] - w.values[j]) / cfg_.eta;
    }
    updates.push_back(std::move(u));
  }
  return updates;
}

GradientUpdate Simulation::aggregate(const std::vector<GradientUpdate>& submissions,
                                     AnomalyReport* report, RoundTimings& timings) {
  const auto t0 = Clock::now();
  GradientUpdate agg;
  switch (cfg_.defense.kind) {
    case AggregatorKind::tinyguard: {
      auto out = tinyguard_aggregate(submissions, cfg_.detector, &timings);
      if (report) *report = std::move(out.report);
      return out.aggregate;  // phase timings already recorded
    }
    case AggregatorKind::fedavg: {
      if (cfg_.defense.sample_weighted) {
        std::vector<double> w;
        w.reserve(submissions.size());
        for (const auto& g : submissions) {
          w.push_back(static_cast<double>(g.sample_count));
        }
        agg = fedavg_mean(submissions, &w);
      } else {
        agg = fedavg_mean(submissions);
      }
      break;
    }
    case AggregatorKind::krum:
    case AggregatorKind::multikrum: {
      const int f = resolved_krum_f(cfg_.defense, submissions.size());
      const int m = cfg_.defense.kind == AggregatorKind::krum
                        ? 1
                        : resolved_multikrum_m(cfg_.defense, submissions.size(), f);
      agg = krum(submissions, f, m);
      break;
    }
    case AggregatorKind::trimmed_mean:
      agg = trimmed_mean(submissions, cfg_.defense.trim_fraction);
      break;
    case AggregatorKind::coord_median:
      agg = coord_median(submissions);
      break;
    case AggregatorKind::foolsgold:
      agg = foolsgold(submissions, foolsgold_);
      break;
  }
  timings.aggregation_ms = ms_since(t0);
  return agg;
}

RoundMetrics Simulation::run_round() {
  RoundMetrics metrics;
  metrics.round = round_;

  const auto t_train = Clock::now();
  std::vector<GradientUpdate> updates = compute_local_updates();
  metrics.timings.local_training_ms = ms_since(t_train);

  last_submissions_ =
      apply_attack(updates, cfg_.attack, byzantine_,
                   derive_seed(cfg_.seed, "attack/" + std::to_string(round_)),
                   FingerprintOptions{cfg_.detector.epsilon, cfg_.detector.topk});

  AnomalyReport report;
  const bool detects = cfg_.defense.kind == AggregatorKind::tinyguard;
  const GradientUpdate agg = aggregate(last_submissions_, detects ? &report : nullptr,
                                       metrics.timings);

  params_ = apply_update(params_, agg, cfg_.eta);

  const Evaluation ev = evaluate(params_, test_);
  metrics.test_accuracy = ev.accuracy;
  metrics.test_loss = ev.mean_loss;

  if (detects) {
    metrics.flagged = report.flagged;
    std::sort(metrics.flagged.begin(), metrics.flagged.end());
  }
  metrics.flagged_count = static_cast<int>(metrics.flagged.size());
  std::size_t true_positive = 0;
  for (int id : metrics.flagged) {
    if (byzantine_.count(id)) ++true_positive;
  }
  if (!metrics.flagged.empty()) {
    metrics.detection_precision =
        static_cast<double>(true_positive) / static_cast<double>(metrics.flagged.size());
  }
  if (!byzantine_.empty()) {
    metrics.detection_recall =
        static_cast<double>(true_positive) / static_cast<double>(byzantine_.size());
  }

  ++round_;
  return metrics;
}

ExperimentResult Simulation::run_all() {
  const auto t0 = Clock::now();
  ExperimentResult result;
  result.config = cfg_;
  result.initial_accuracy = evaluate(params_, test_).accuracy;
  result.rounds.reserve(static_cast<std::size_t>(cfg_.rounds));
  for (int t = 0; t < cfg_.rounds; ++t) {
    result.rounds.push_back(run_round());
  }
  result.final_accuracy =
      result.rounds.empty() ? result.initial_accuracy : result.rounds.back().test_accuracy;

  double precision_sum = 0.0;
  std::size_t precision_count = 0;
  for (const auto& r : result.rounds) {
    if (r.detection_precision) {
      precision_sum += *r.detection_precision;
      ++precision_count;
    }
  }
  if (precision_count > 0) {
    result.mean_detection_precision = precision_sum / static_cast<double>(precision_count);
  }
  result.total_runtime_ms = ms_since(t0);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  Simulation sim(config);
  return sim.run_all();
}

std::vector<ProbeRow> runtime_scaling_probe(const std::vector<std::size_t>& n_values,
                                            std::size_t dim,
                                            const std::vector<AggregatorKind>& kinds,
                                            int repetitions, std::uint64_t seed) {
  if (dim < 1 || repetitions < 1) {
    throw ConfigError("probe needs a positive dimension and repetition count");
  }
  std::vector<ProbeRow> rows;
  const LayerLayout layout = LayerLayout::dense(dim);
  DetectorConfig det;

  for (std::size_t n : n_values) {
    if (n < 1) throw ConfigError("probe client counts must be positive");
    Rng rng(derive_seed(seed, "probe/" + std::to_string(n)));
    std::vector<GradientUpdate> grads(n);
    for (std::size_t i = 0; i < n; ++i) {
      grads[i].layout = layout;
      grads[i].client_id = static_cast<int>(i);
      grads[i].values.resize(dim);
      for (auto& v : grads[i].values) v = rng.normal();
    }

    std::vector<Fingerprint> fps;
    fps.reserve(n);
    for (const auto& g : grads) fps.push_back(extract_fingerprint(g));

    volatile double sink = 0.0;
    for (AggregatorKind kind : kinds) {
      std::vector<double> times;
      times.reserve(static_cast<std::size_t>(repetitions));
      for (int rep = 0; rep < repetitions; ++rep) {
        if (kind == AggregatorKind::tinyguard) {
          // Post-extraction detection only; loop to rise above timer noise.
          const int inner = std::max(1, static_cast<int>(20000 / n));
          const auto t0 = Clock::now();
          for (int it = 0; it < inner; ++it) {
            const auto centroid = robust_centroid(fps);
            const auto raw = anomaly_scores(fps, centroid, det.standardize_features);
            const auto norm = normalize_scores(raw);
            const double tau = adaptive_threshold(norm, det.lambda);
            std::size_t flagged = 0;
            for (double s : norm) {
              if (s > tau) ++flagged;
            }
            sink = sink + static_cast<double>(flagged);
          }
          times.push_back(ms_since(t0) / inner);
        } else if (kind == AggregatorKind::krum || kind == AggregatorKind::multikrum) {
          const int f = static_cast<int>(std::ceil(0.2 * static_cast<double>(n)));
          const auto t0 = Clock::now();
          auto sel = krum_select(grads, f, 1);
          times.push_back(ms_since(t0));
          sink = sink + static_cast<double>(sel.front());
        } else if (kind == AggregatorKind::trimmed_mean) {
          const auto t0 = Clock::now();
          auto out = trimmed_mean(grads, 0.2);
          times.push_back(ms_since(t0));
          sink = sink + out.values[0];
        } else if (kind == AggregatorKind::coord_median) {
          const auto t0 = Clock::now();
          auto out = coord_median(grads);
          times.push_back(ms_since(t0));
          sink = sink + out.values[0];
        } else if (kind == AggregatorKind::foolsgold) {
          FoolsGoldState state;
          state.record(grads);
          const auto t0 = Clock::now();
          auto out = foolsgold(grads, state);
          times.push_back(ms_since(t0));
          sink = sink + out.values[0];
        } else {
          const auto t0 = Clock::now();
          auto out = fedavg_mean(grads);
          times.push_back(ms_since(t0));
          sink = sink + out.values[0];
        }
      }
      rows.push_back({n, kind, median_of(times)});
    }
  }
  return rows;
}

}  // namespace tinyguard
