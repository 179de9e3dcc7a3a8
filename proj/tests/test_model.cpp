#include <cmath>

#include <doctest.h>

#include "test_helpers.hpp"
#include "tinyguard/errors.hpp"
#include "tinyguard/model.hpp"

using namespace tinyguard;

namespace {

Batch single_example(std::vector<double> x, int label) {
  Batch b;
  b.input_dim = x.size();
  b.inputs = std::move(x);
  b.labels = {label};
  return b;
}

Batch random_batch(Rng& rng, std::size_t n, std::size_t dim, int classes) {
  Batch b;
  b.input_dim = dim;
  b.inputs.resize(n * dim);
  b.labels.resize(n);
  for (auto& v : b.inputs) v = rng.uniform();
  for (auto& y : b.labels) y = static_cast<int>(rng.below(classes));
  return b;
}

}  // namespace

TEST_CASE("init_params layout arithmetic") {
  const auto p = init_params({4, 3}, 7);
  CHECK(p.layout.total_dim() == 15);  // 4*3 weights + 3 biases
  CHECK(p.layout.layer_count() == 2);
  CHECK(p.values.size() == 15);

  const auto big = init_params({784, 64, 10}, 1);
  CHECK(big.layout.total_dim() == 50890);
  CHECK(big.layout.layer_count() == 4);
}

TEST_CASE("init_params is deterministic and seed-sensitive") {
  const auto a = init_params({6, 5, 3}, 42);
  const auto b = init_params({6, 5, 3}, 42);
  CHECK(a.values == b.values);
  const auto c = init_params({6, 5, 3}, 43);
  CHECK(a.values != c.values);
}

TEST_CASE("init_params rejects bad widths") {
  CHECK_THROWS_AS(init_params({}, 1), ConfigError);
  CHECK_THROWS_AS(init_params({5}, 1), ConfigError);
  CHECK_THROWS_AS(init_params({5, 0, 2}, 1), ConfigError);
}

TEST_CASE("biases start at zero") {
  const auto p = init_params({4, 3, 2}, 9);
  for (std::size_t l : {std::size_t{1}, std::size_t{3}}) {
    const auto& s = p.layout.slices()[l];
    for (std::size_t i = 0; i < s.length; ++i) {
      CHECK(p.values[s.offset + i] == 0.0);
    }
  }
}

TEST_CASE("confident correct prediction has near-zero gradient") {
  auto p = init_params({3, 2}, 5);
  // Push the true class's bias far up: softmax saturates at the minimizer.
  p.values[p.layout.slices()[1].offset + 0] = 50.0;
  const auto batch = single_example({0.2, 0.4, 0.1}, 0);
  const auto g = compute_gradient(p, batch);
  CHECK(l2_norm(g.values) < 1e-6);
}

TEST_CASE("gradient matches central finite differences") {
  // d = 7*5 + 5 + 5*3 + 3 = 58; the loss-based oracle is independent of the
  // backward pass.
  const std::vector<std::size_t> widths{7, 5, 3};
  auto p = init_params(widths, 11);
  Rng rng(123);
  const auto batch = random_batch(rng, 6, 7, 3);
  const auto g = compute_gradient(p, batch);
  REQUIRE(g.values.size() == 58);

  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t j = 0; j < p.values.size(); ++j) {
    ModelParams plus = p;
    plus.values[j] += h;
    ModelParams minus = p;
    minus.values[j] -= h;
    const double fd =
        (evaluate(plus, batch).mean_loss - evaluate(minus, batch).mean_loss) / (2.0 * h);
    const double denom = std::max({std::abs(g.values[j]), std::abs(fd), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - g.values[j]) / denom);
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
  const auto p = init_params({5, 4, 3}, 3);
  Rng rng(7);
  const auto batch = random_batch(rng, 4, 5, 3);
  Batch doubled = batch;
  doubled.inputs.insert(doubled.inputs.end(), batch.inputs.begin(), batch.inputs.end());
  doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());

  const auto g1 = compute_gradient(p, batch);
  const auto g2 = compute_gradient(p, doubled);
  for (std::size_t j = 0; j < g1.values.size(); ++j) {
    CHECK(g1.values[j] == doctest::Approx(g2.values[j]).epsilon(1e-12));
  }
}

TEST_CASE("non-finite inputs are rejected") {
  const auto p = init_params({3, 2}, 5);
  auto batch = single_example({0.1, std::nan(""), 0.3}, 1);
  CHECK_THROWS_AS(compute_gradient(p, batch), NumericError);
}

TEST_CASE("apply_update arithmetic") {
  ModelParams p;
  p.layout = LayerLayout::dense(2);
  p.values = {1.0, 1.0};
  p.widths = {1, 2};
  auto g = tgtest::make_dense({2.0, -2.0});

  SUBCASE("eta zero is the bit-exact identity") {
    const auto next = apply_update(p, g, 0.0);
    CHECK(next.values == p.values);
  }
  SUBCASE("w - eta*g") {
    const auto next = apply_update(p, g, 0.5);
    CHECK(next.values[0] == 0.0);
    CHECK(next.values[1] == 2.0);
  }
  SUBCASE("two half steps equal one full step") {
    const auto once = apply_update(p, g, 0.5);
    const auto twice = apply_update(apply_update(p, g, 0.25), g, 0.25);
    for (std::size_t j = 0; j < once.values.size(); ++j) {
      CHECK(once.values[j] == doctest::Approx(twice.values[j]).epsilon(1e-12));
    }
  }
  SUBCASE("layout mismatch is rejected") {
    auto wrong = tgtest::make_dense({1.0, 2.0, 3.0});
    CHECK_THROWS_AS(apply_update(p, wrong, 0.1), DimensionError);
  }
}

TEST_CASE("evaluate on random labels sits near chance") {
  const auto p = init_params({8, 16, 10}, 21);
  Rng rng(99);
  const auto batch = random_batch(rng, 10000, 8, 10);
  const auto ev = evaluate(p, batch);
  CHECK(ev.accuracy > 0.07);
  CHECK(ev.accuracy < 0.13);
  CHECK(ev.mean_loss > 0.0);
}

TEST_CASE("a memorized dataset evaluates to accuracy 1") {
  Batch tiny;
  tiny.input_dim = 4;
  tiny.inputs = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  tiny.labels = {0, 1, 2, 3};

  auto p = init_params({4, 16, 4}, 2);
  double loss = evaluate(p, tiny).mean_loss;
  for (int it = 0; it < 5000 && loss >= 1e-3; ++it) {
    const auto g = compute_gradient(p, tiny);
    p = apply_update(p, g, 0.5);
    loss = evaluate(p, tiny).mean_loss;
  }
  REQUIRE(loss < 1e-3);
  CHECK(evaluate(p, tiny).accuracy == 1.0);
}

TEST_CASE("evaluate is deterministic and rejects empty input") {
  const auto p = init_params({3, 2}, 1);
  Rng rng(5);
  const auto batch = random_batch(rng, 50, 3, 2);
  const auto a = evaluate(p, batch);
  const auto b = evaluate(p, batch);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.mean_loss == b.mean_loss);

  Batch empty;
  empty.input_dim = 3;
  CHECK_THROWS_AS(evaluate(p, empty), ConfigError);
}

TEST_CASE("layout integrity: layer views tile the flat vector") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 5 + rng.below(40);
    const std::size_t layers = 1 + rng.below(std::min<std::size_t>(dim, 6));
    const auto g = tgtest::random_update(rng, dim, layers);
    std::vector<double> glued;
    for (std::size_t l = 0; l < g.layout.layer_count(); ++l) {
      const auto view = layer_view(g, l);
      glued.insert(glued.end(), view.begin(), view.end());
    }
    CHECK(glued == g.values);
  }
}

TEST_CASE("gradients are bit-identical across runs for a fixed seed") {
  const auto p = init_params({6, 4, 3}, 31);
  Rng rng_a(400), rng_b(400);
  const auto batch_a = random_batch(rng_a, 8, 6, 3);
  const auto batch_b = random_batch(rng_b, 8, 6, 3);
  const auto ga = compute_gradient(p, batch_a);
  const auto gb = compute_gradient(p, batch_b);
  CHECK(ga.values == gb.values);
}
