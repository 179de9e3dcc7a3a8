#include "tinyguard/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tinyguard/errors.hpp"
#include "tinyguard/rng.hpp"

namespace tinyguard {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("truncated IDX header while reading " + what);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count,
                                        const std::string& what) {
  std::vector<unsigned char> bytes(count);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count))) {
    throw FormatError("truncated IDX payload in " + what);
  }
  return bytes;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) {
    throw FormatError("cannot open IDX image file: " + images_path.string());
  }
  if (read_u32_be(img, "image magic") != kImageMagic) {
    throw FormatError("bad IDX image magic in " + images_path.string());
  }
  const std::uint32_t count = read_u32_be(img, "image count");
  const std::uint32_t rows = read_u32_be(img, "image rows");
  const std::uint32_t cols = read_u32_be(img, "image cols");
  const std::size_t dim = std::size_t(rows) * cols;
  const auto pixels = read_payload(img, std::size_t(count) * dim, images_path.string());

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) {
    throw FormatError("cannot open IDX label file: " + labels_path.string());
  }
  if (read_u32_be(lab, "label magic") != kLabelMagic) {
    throw FormatError("bad IDX label magic in " + labels_path.string());
  }
  const std::uint32_t label_count = read_u32_be(lab, "label count");
  if (label_count != count) {
    throw FormatError("IDX image/label counts disagree");
  }
  const auto raw_labels = read_payload(lab, label_count, labels_path.string());

  Dataset ds;
  ds.input_dim = dim;
  ds.inputs.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    ds.inputs[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = max_label + 1;
  return ds;
}

Dataset generate_synthetic(std::size_t num_examples, std::size_t input_dim,
                           int num_classes, std::uint64_t seed, double separation,
                           double noise_sigma) {
  if (num_examples == 0 || input_dim == 0 || num_classes < 1) {
    throw ConfigError("synthetic dataset needs positive counts");
  }
  if (!(noise_sigma > 0.0) || !(separation >= 0.0)) {
    throw ConfigError("synthetic dataset needs positive noise and non-negative separation");
  }

  const std::size_t c = static_cast<std::size_t>(num_classes);
  Rng mean_rng(derive_seed(seed, "synthetic/means"));
  std::vector<double> means;
  const double min_dist = separation * noise_sigma;
  for (int attempt = 0; attempt < 200; ++attempt) {
    means.assign(c * input_dim, 0.0);
    for (auto& v : means) v = mean_rng.uniform(0.25, 0.75);
    // Equalize per-class brightness (coordinate sums) so classes differ in
    // direction, not in global intensity, as with centered image benchmarks.
    for (std::size_t a = 0; a < c; ++a) {
      double sum = 0.0;
      for (std::size_t j = 0; j < input_dim; ++j) sum += means[a * input_dim + j];
      const double shift = sum / static_cast<double>(input_dim) - 0.5;
      for (std::size_t j = 0; j < input_dim; ++j) means[a * input_dim + j] -= shift;
    }
    bool ok = true;
    for (std::size_t a = 0; a < c && ok; ++a) {
      for (std::size_t b = a + 1; b < c && ok; ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < input_dim; ++j) {
          const double diff = means[a * input_dim + j] - means[b * input_dim + j];
          d2 += diff * diff;
        }
        if (d2 < min_dist * min_dist) ok = false;
      }
    }
    if (ok) break;
    if (attempt == 199) {
      throw ConfigError("cannot place class means with the requested separation");
    }
  }

  Dataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = num_classes;
  ds.labels.resize(num_examples);
  ds.inputs.resize(num_examples * input_dim);
  Rng label_rng(derive_seed(seed, "synthetic/labels"));
  Rng noise_rng(derive_seed(seed, "synthetic/noise"));
  for (std::size_t e = 0; e < num_examples; ++e) {
    const std::size_t y = label_rng.below(c);
    ds.labels[e] = static_cast<int>(y);
    for (std::size_t j = 0; j < input_dim; ++j) {
      const double v = means[y * input_dim + j] + noise_sigma * noise_rng.normal();
      ds.inputs[e * input_dim + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return ds;
}

std::vector<Partition> dirichlet_partition(const Dataset& dataset, std::size_t n_clients,
                                           double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) {
    throw ConfigError("dirichlet alpha must be positive");
  }
  if (n_clients == 0) {
    throw ConfigError("need at least one client");
  }
  if (dataset.size() == 0) {
    throw ConfigError("cannot partition an empty dataset");
  }
  if (dataset.size() < n_clients) {
    throw ConfigError("fewer examples than clients");
  }

  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(dataset.num_classes));
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    by_class.at(static_cast<std::size_t>(dataset.labels[e])).push_back(e);
  }

  Rng rng(derive_seed(seed, "dirichlet"));
  std::vector<std::vector<std::size_t>> assigned(n_clients);
  std::vector<std::size_t> order(n_clients);

  for (auto& idxs : by_class) {
    if (idxs.empty()) continue;
    rng.shuffle(idxs);
    const auto p = rng.dirichlet(alpha, n_clients);

    // Apportion this class's examples by largest remainder.
    const double total = static_cast<double>(idxs.size());
    std::vector<std::size_t> counts(n_clients);
    std::vector<double> frac(n_clients);
    std::size_t used = 0;
    for (std::size_t i = 0; i < n_clients; ++i) {
      const double exact = p[i] * total;
      counts[i] = static_cast<std::size_t>(std::floor(exact));
      frac[i] = exact - std::floor(exact);
      used += counts[i];
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; used < idxs.size(); ++r, ++used) {
      counts[order[r % n_clients]] += 1;
    }

    std::size_t cursor = 0;
    for (std::size_t i = 0; i < n_clients; ++i) {
      for (std::size_t k = 0; k < counts[i]; ++k) {
        assigned[i].push_back(idxs[cursor++]);
      }
    }
  }

  // Empty clients take one example from the currently largest client.
  for (std::size_t i = 0; i < n_clients; ++i) {
    if (!assigned[i].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < n_clients; ++j) {
      if (assigned[j].size() > assigned[largest].size()) largest = j;
    }
    if (assigned[largest].size() <= 1) {
      throw ConfigError("not enough examples to give every client one");
    }
    assigned[i].push_back(assigned[largest].back());
    assigned[largest].pop_back();
  }

  std::vector<Partition> parts(n_clients);
  for (std::size_t i = 0; i < n_clients; ++i) {
    std::sort(assigned[i].begin(), assigned[i].end());
    parts[i].client_id = static_cast<int>(i);
    parts[i].example_indices = std::move(assigned[i]);
  }
  return parts;
}

std::vector<int> flip_labels(const Dataset& dataset, const Partition& partition) {
  if (dataset.num_classes < 2) {
    throw ConfigError("label flipping needs at least two classes");
  }
  std::vector<int> flipped;
  flipped.reserve(partition.example_indices.size());
  for (std::size_t e : partition.example_indices) {
    flipped.push_back(dataset.num_classes - 1 - dataset.labels.at(e));
  }
  return flipped;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                 const std::vector<int>* label_override) {
  if (label_override && label_override->size() != indices.size()) {
    throw DimensionError("label override must align with the index list");
  }
  Batch b;
  b.input_dim = dataset.input_dim;
  b.inputs.reserve(indices.size() * dataset.input_dim);
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t e = indices[i];
    const double* row = dataset.inputs.data() + e * dataset.input_dim;
    b.inputs.insert(b.inputs.end(), row, row + dataset.input_dim);
    b.labels.push_back(label_override ? (*label_override)[i] : dataset.labels.at(e));
  }
  return b;
}

}  // namespace tinyguard
