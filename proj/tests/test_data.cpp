#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <doctest.h>

#include "test_helpers.hpp"
#include "tinyguard/data.hpp"
#include "tinyguard/errors.hpp"

using namespace tinyguard;
namespace fs = std::filesystem;

namespace {

fs::path test_tmp_dir() {
  const auto dir = fs::temp_directory_path() / "tinyguard_data_tests";
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_u32_be(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

// Two 2x2 images with pixel bytes 0..7 and labels {3, 9}.
void write_idx_fixture(const fs::path& images, const fs::path& labels,
                       std::uint32_t image_magic = 0x00000803,
                       std::uint32_t label_magic = 0x00000801, bool truncate = false) {
  std::vector<unsigned char> img;
  push_u32_be(img, image_magic);
  push_u32_be(img, 2);
  push_u32_be(img, 2);
  push_u32_be(img, 2);
  for (unsigned char b = 0; b < 8; ++b) img.push_back(b);
  if (truncate) img.resize(img.size() - 3);
  write_bytes(images, img);

  std::vector<unsigned char> lab;
  push_u32_be(lab, label_magic);
  push_u32_be(lab, 2);
  lab.push_back(3);
  lab.push_back(9);
  write_bytes(labels, lab);
}

// Per-client class histogram as fractions of the client's own size.
std::vector<double> class_fractions(const Dataset& ds, const Partition& part) {
  std::vector<double> hist(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (std::size_t e : part.example_indices) {
    hist[static_cast<std::size_t>(ds.labels[e])] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(part.example_indices.size());
  return hist;
}

double mean_tv_distance(const Dataset& ds, const std::vector<Partition>& parts) {
  std::vector<double> global(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0;
  for (auto& g : global) g /= static_cast<double>(ds.size());
  double acc = 0.0;
  for (const auto& p : parts) {
    const auto frac = class_fractions(ds, p);
    double tv = 0.0;
    for (std::size_t c = 0; c < global.size(); ++c) tv += std::abs(frac[c] - global[c]);
    acc += 0.5 * tv;
  }
  return acc / static_cast<double>(parts.size());
}

}  // namespace

TEST_CASE("idx fixture round-trips exact pixel values") {
  const auto dir = test_tmp_dir();
  write_idx_fixture(dir / "img", dir / "lab");
  const auto ds = load_idx(dir / "img", dir / "lab");
  CHECK(ds.size() == 2);
  CHECK(ds.input_dim == 4);
  CHECK(ds.num_classes == 10);  // max label 9
  for (int i = 0; i < 8; ++i) {
    CHECK(ds.inputs[static_cast<std::size_t>(i)] == static_cast<double>(i) / 255.0);
  }
  CHECK(ds.labels == std::vector<int>{3, 9});
}

TEST_CASE("idx loader rejects malformed files") {
  const auto dir = test_tmp_dir();
  SUBCASE("wrong label magic") {
    write_idx_fixture(dir / "img2", dir / "lab2", 0x00000803, 0x00000805);
    CHECK_THROWS_AS(load_idx(dir / "img2", dir / "lab2"), FormatError);
  }
  SUBCASE("wrong image magic") {
    write_idx_fixture(dir / "img3", dir / "lab3", 0x00000903);
    CHECK_THROWS_AS(load_idx(dir / "img3", dir / "lab3"), FormatError);
  }
  SUBCASE("truncated payload") {
    write_idx_fixture(dir / "img4", dir / "lab4", 0x00000803, 0x00000801, true);
    CHECK_THROWS_AS(load_idx(dir / "img4", dir / "lab4"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx(dir / "nope", dir / "nope2"), FormatError);
  }
}

TEST_CASE("real MNIST files load with the published shape when present") {
  const char* dir = std::getenv("TINYGUARD_MNIST_DIR");
  if (!dir) {
    MESSAGE("TINYGUARD_MNIST_DIR not set; skipping the real-file check");
    return;
  }
  const auto ds = load_idx(fs::path(dir) / "train-images-idx3-ubyte",
                           fs::path(dir) / "train-labels-idx1-ubyte");
  CHECK(ds.size() == 60000);
  CHECK(ds.input_dim == 784);
  CHECK(ds.num_classes == 10);
}

TEST_CASE("synthetic generation is deterministic") {
  const auto a = generate_synthetic(200, 8, 3, 77);
  const auto b = generate_synthetic(200, 8, 3, 77);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  const auto c = generate_synthetic(200, 8, 3, 78);
  CHECK(a.inputs != c.inputs);
}

TEST_CASE("synthetic values stay in [0,1] and single-class labels are zero") {
  const auto ds = generate_synthetic(300, 6, 1, 5);
  for (double v : ds.inputs) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (int y : ds.labels) CHECK(y == 0);
}

TEST_CASE("well-separated synthetic classes are learnable by a linear model") {
  const auto ds = generate_synthetic(100, 8, 2, 13, 4.0, 0.08);
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch all = make_batch(ds, idx);

  auto p = init_params({8, 2}, 3);
  for (int it = 0; it < 400; ++it) {
    p = apply_update(p, compute_gradient(p, all), 0.5);
  }
  CHECK(evaluate(p, all).accuracy > 0.95);
}

TEST_CASE("dirichlet partition covers every example exactly once") {
  Rng rng(4);
  for (double alpha : {0.1, 0.5, 10.0}) {
    const auto ds = generate_synthetic(257, 8, 5, 11);
    const auto parts = dirichlet_partition(ds, 7, alpha, rng.next_u64());
    REQUIRE(parts.size() == 7);
    std::set<std::size_t> seen;
    for (const auto& p : parts) {
      CHECK(!p.example_indices.empty());
      for (std::size_t e : p.example_indices) {
        CHECK(seen.insert(e).second);  // disjoint
        CHECK(e < ds.size());
      }
    }
    CHECK(seen.size() == ds.size());  // full coverage
  }
}

TEST_CASE("huge alpha approaches the IID split") {
  const auto ds = generate_synthetic(20000, 8, 10, 3);
  const auto parts = dirichlet_partition(ds, 10, 1e6, 99);
  std::vector<double> global(10, 0.0);
  for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0;
  for (auto& g : global) g /= static_cast<double>(ds.size());
  for (const auto& p : parts) {
    const auto frac = class_fractions(ds, p);
    for (std::size_t c = 0; c < 10; ++c) {
      CHECK(std::abs(frac[c] - global[c]) / global[c] < 0.05);
    }
  }
}

TEST_CASE("tiny alpha produces clients dominated by one or two classes") {
  const auto ds = generate_synthetic(5000, 8, 10, 21);
  int seeds_with_skewed_client = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto parts = dirichlet_partition(ds, 50, 0.1, seed);
    bool found = false;
    for (const auto& p : parts) {
      auto frac = class_fractions(ds, p);
      std::sort(frac.begin(), frac.end(), std::greater<double>());
      if (frac[0] + frac[1] >= 0.8) {
        found = true;
        break;
      }
    }
    if (found) ++seeds_with_skewed_client;
  }
  CHECK(seeds_with_skewed_client == 20);
}

TEST_CASE("heterogeneity is monotone in alpha") {
  const auto ds = generate_synthetic(4000, 8, 10, 31);
  double tv_01 = 0.0, tv_05 = 0.0, tv_iid = 0.0;
  const int seeds = 10;
  for (std::uint64_t seed = 100; seed < 100 + seeds; ++seed) {
    tv_01 += mean_tv_distance(ds, dirichlet_partition(ds, 20, 0.1, seed));
    tv_05 += mean_tv_distance(ds, dirichlet_partition(ds, 20, 0.5, seed));
    tv_iid += mean_tv_distance(ds, dirichlet_partition(ds, 20, 1e6, seed));
  }
  CHECK(tv_01 / seeds > tv_05 / seeds);
  CHECK(tv_05 / seeds > tv_iid / seeds);
}

TEST_CASE("empty clients are repaired from the largest client") {
  // 5 examples over 5 clients with extreme skew: someone would end up empty
  // without the repair rule.
  const auto ds = generate_synthetic(5, 3, 2, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto parts = dirichlet_partition(ds, 5, 0.05, seed);
    for (const auto& p : parts) CHECK(p.example_indices.size() == 1);
  }
}

TEST_CASE("partition rejects bad arguments") {
  const auto ds = generate_synthetic(10, 3, 2, 1);
  CHECK_THROWS_AS(dirichlet_partition(ds, 3, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(dirichlet_partition(ds, 3, -1.0, 1), ConfigError);
  CHECK_THROWS_AS(dirichlet_partition(ds, 0, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(dirichlet_partition(ds, 11, 0.5, 1), ConfigError);
}

TEST_CASE("label flipping is the fixed pairwise map") {
  auto ds = generate_synthetic(50, 8, 10, 9);
  Partition all;
  all.client_id = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) all.example_indices.push_back(i);

  const auto flipped = flip_labels(ds, all);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(flipped[i] == 9 - ds.labels[all.example_indices[i]]);
  }

  SUBCASE("y=3 maps to 6 under C=10") {
    const std::size_t pos =
        std::find(ds.labels.begin(), ds.labels.end(), 3) - ds.labels.begin();
    REQUIRE(pos < ds.size());
    CHECK(flipped[pos] == 6);
  }

  SUBCASE("flipping twice restores the original labels") {
    Dataset once = ds;
    for (std::size_t i = 0; i < once.size(); ++i) once.labels[i] = flipped[i];
    const auto twice = flip_labels(once, all);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(twice[i] == ds.labels[i]);
  }
}

TEST_CASE("binary labels invert and C=1 is rejected") {
  auto ds = generate_synthetic(20, 3, 2, 6);
  Partition all;
  for (std::size_t i = 0; i < ds.size(); ++i) all.example_indices.push_back(i);
  const auto flipped = flip_labels(ds, all);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(flipped[i] == 1 - ds.labels[i]);

  auto mono = generate_synthetic(20, 3, 1, 6);
  CHECK_THROWS_AS(flip_labels(mono, all), ConfigError);
}
