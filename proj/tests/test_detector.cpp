#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <doctest.h>

#include "test_helpers.hpp"
#include "tinyguard/baselines.hpp"
#include "tinyguard/detector.hpp"
#include "tinyguard/errors.hpp"
#include "tinyguard/robust.hpp"

using namespace tinyguard;

namespace {

// Brute-force lower-middle median by full sort.
double oracle_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

double oracle_mad(const std::vector<double>& v) {
  const double med = oracle_median(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  return oracle_median(dev);
}

std::vector<Fingerprint> fingerprints_of(const std::vector<GradientUpdate>& grads) {
  std::vector<Fingerprint> fps;
  for (const auto& g : grads) fps.push_back(extract_fingerprint(g));
  return fps;
}

Fingerprint feature_vector(std::vector<double> features) {
  Fingerprint fp;
  fp.features = std::move(features);
  fp.layer_count = 1;
  return fp;
}

}  // namespace

TEST_CASE("median and MAD agree with brute force on 1000 random vectors") {
  Rng rng(6001);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(25);
    std::vector<double> v(n);
    for (auto& x : v) {
      x = rng.uniform(-10.0, 10.0);
      if (rng.uniform() < 0.2) x = std::round(x);  // inject ties
    }
    CHECK(median_of(v) == oracle_median(v));
    CHECK(mad_of(v) == oracle_mad(v));
  }
}

TEST_CASE("median uses the declared lower-middle tie rule") {
  CHECK(median_of({1, 2, 100}) == 2.0);
  CHECK(median_of({1, 2, 3, 4}) == 2.0);
  CHECK(median_of({4, 3, 2, 1}) == 2.0);
  CHECK(median_of({7}) == 7.0);
  CHECK_THROWS_AS(median_of({}), ConfigError);
}

TEST_CASE("robust centroid examples") {
  SUBCASE("single fingerprint is its own centroid") {
    const auto fp = feature_vector({1, 2, 3});
    const auto c = robust_centroid({fp});
    CHECK(c.features == fp.features);
  }
  SUBCASE("median resists one outlier") {
    const auto c = robust_centroid(
        {feature_vector({1}), feature_vector({2}), feature_vector({100})});
    CHECK(c.features[0] == 2.0);
  }
  SUBCASE("even count uses the lower middle") {
    const auto c = robust_centroid({feature_vector({1}), feature_vector({2}),
                                    feature_vector({3}), feature_vector({4})});
    CHECK(c.features[0] == 2.0);
  }
  SUBCASE("mixed lengths are rejected") {
    CHECK_THROWS_AS(robust_centroid({feature_vector({1, 2}), feature_vector({1})}),
                    DimensionError);
  }
}

TEST_CASE("anomaly score examples") {
  SUBCASE("identical fingerprints score zero") {
    std::vector<Fingerprint> fps(5, feature_vector({2, 3, 4}));
    const auto c = robust_centroid(fps);
    for (double s : anomaly_scores(fps, c, false)) CHECK(s == 0.0);
    for (double s : anomaly_scores(fps, c, true)) CHECK(s == 0.0);
  }
  SUBCASE("a client at the centroid scores zero") {
    std::vector<Fingerprint> fps{feature_vector({0, 0}), feature_vector({1, 2}),
                                 feature_vector({-1, -2})};
    const auto c = robust_centroid(fps);
    CHECK(anomaly_scores(fps, c, false)[0] == 0.0);
  }
  SUBCASE("unstandardized one-feature distances are absolute deviations") {
    std::vector<Fingerprint> fps{feature_vector({0}), feature_vector({0}),
                                 feature_vector({0}), feature_vector({10})};
    const auto scores = anomaly_scores(fps, feature_vector({0}), false);
    CHECK(scores == std::vector<double>{0, 0, 0, 10});
  }
}

TEST_CASE("normalize_scores matches the worked example") {
  const auto norm = normalize_scores({1, 2, 3, 4, 100});
  REQUIRE(norm.size() == 5);
  CHECK(norm[0] == -2.0);
  CHECK(norm[1] == -1.0);
  CHECK(norm[2] == 0.0);
  CHECK(norm[3] == 1.0);
  CHECK(norm[4] == 97.0);
}

TEST_CASE("normalize_scores degenerate and shift behavior") {
  SUBCASE("all-equal scores normalize to zero") {
    const auto norm = normalize_scores({5, 5, 5, 5});
    for (double s : norm) CHECK(s == 0.0);
  }
  SUBCASE("translation invariance") {
    const std::vector<double> s{0.4, 1.7, 2.9, 8.2, 3.3};
    std::vector<double> shifted = s;
    for (auto& x : shifted) x += 17.25;
    const auto a = normalize_scores(s);
    const auto b = normalize_scores(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adaptive threshold flags exactly the outlier") {
  const std::vector<double> norm{-2, -1, 0, 1, 97};
  const double tau = adaptive_threshold(norm, 2.5);
  CHECK(tau == 2.5);  // median 0, MAD 1
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm[i] > tau) flagged.push_back(i);
  }
  CHECK(flagged == std::vector<std::size_t>{4});
}

TEST_CASE("all-zero normalized scores flag nobody (strict inequality)") {
  const std::vector<double> norm{0, 0, 0};
  const double tau = adaptive_threshold(norm, 2.5);
  CHECK(tau == 0.0);
  for (double s : norm) CHECK_FALSE(s > tau);
}

TEST_CASE("the threshold is monotone in lambda") {
  Rng rng(88);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> raw(3 + rng.below(20));
    for (auto& x : raw) x = std::abs(rng.normal()) * 5.0;
    const auto norm = normalize_scores(raw);
    double prev_tau = -1e300;
    std::size_t prev_flagged = norm.size() + 1;
    for (double lambda : {0.5, 1.0, 2.5, 5.0, 20.0}) {
      const double tau = adaptive_threshold(norm, lambda);
      CHECK(tau >= prev_tau);
      std::size_t flagged = 0;
      for (double s : norm) {
        if (s > tau) ++flagged;
      }
      CHECK(flagged <= prev_flagged);  // larger lambda never enlarges the set
      prev_tau = tau;
      prev_flagged = flagged;
    }
  }
}

TEST_CASE("tinyguard_aggregate on identical honest clients") {
  const LayerLayout layout({{0, 3}, {3, 2}});
  std::vector<GradientUpdate> grads;
  for (int i = 0; i < 6; ++i) {
    grads.push_back(tgtest::make_update({1, -2, 0.5, 3, 1}, layout, i));
  }
  const auto out = tinyguard_aggregate(grads);
  CHECK(out.report.flagged.empty());
  for (std::size_t j = 0; j < grads[0].values.size(); ++j) {
    CHECK(out.aggregate.values[j] == doctest::Approx(grads[0].values[j]).epsilon(1e-12));
  }
}

TEST_CASE("one wildly scaled client is flagged and excluded") {
  Rng rng(9);
  const LayerLayout layout({{0, 10}, {10, 6}});
  std::vector<GradientUpdate> grads;
  std::vector<double> base(16);
  for (auto& v : base) v = rng.normal();
  for (int i = 0; i < 9; ++i) {
    auto values = base;
    for (auto& v : values) v += 0.01 * rng.normal();  // near-identical jitter
    grads.push_back(tgtest::make_update(std::move(values), layout, i));
  }
  auto bad = base;
  for (auto& v : bad) v *= 100.0;
  grads.push_back(tgtest::make_update(std::move(bad), layout, 9));

  const auto out = tinyguard_aggregate(grads);

  // Oracle: the detection pipeline run step by step on the ten fingerprints.
  const auto fps = fingerprints_of(grads);
  const auto centroid = robust_centroid(fps);
  const auto raw = anomaly_scores(fps, centroid, true);
  const auto norm = normalize_scores(raw);
  const double tau = adaptive_threshold(norm, 2.5);
  std::vector<std::size_t> trusted;
  std::vector<int> expected_flags;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    if (norm[i] > tau) {
      expected_flags.push_back(grads[i].client_id);
    } else {
      trusted.push_back(i);
    }
  }
  CHECK(out.report.flagged == expected_flags);
  const auto expected = mean_update(grads, trusted);
  for (std::size_t j = 0; j < expected.values.size(); ++j) {
    CHECK(std::abs(out.aggregate.values[j] - expected.values[j]) < 1e-9);
  }

  // For this draw the pipeline flags exactly the scaled client, so the
  // aggregate equals the nine-honest mean.
  CHECK(out.report.flagged == std::vector<int>{9});
  std::vector<std::size_t> honest(9);
  std::iota(honest.begin(), honest.end(), std::size_t{0});
  const auto honest_mean = mean_update(grads, honest);
  for (std::size_t j = 0; j < honest_mean.values.size(); ++j) {
    CHECK(std::abs(out.aggregate.values[j] - honest_mean.values[j]) < 1e-9);
  }
}

TEST_CASE("a huge lambda reduces to plain fedavg bit-for-bit") {
  Rng rng(77);
  const auto layout = tgtest::random_layout(rng, 12, 2);
  std::vector<GradientUpdate> grads;
  for (int i = 0; i < 7; ++i) {
    grads.push_back(tgtest::random_values(rng, layout, i));
  }
  DetectorConfig cfg;
  cfg.lambda = 1e9;
  const auto out = tinyguard_aggregate(grads, cfg);
  CHECK(out.report.flagged.empty());
  const auto plain = fedavg_mean(grads);
  CHECK(out.aggregate.values == plain.values);  // identical summation order
}

TEST_CASE("flag-set correctness and never-flag-negative hold on random inputs") {
  Rng rng(4321);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    const auto layout = tgtest::random_layout(rng, 18, 3);
    std::vector<GradientUpdate> grads;
    for (std::size_t i = 0; i < n; ++i) {
      auto g = tgtest::random_values(rng, layout, static_cast<int>(i));
      if (rng.uniform() < 0.25) {
        for (auto& v : g.values) v *= 50.0;  // occasional outlier
      }
      grads.push_back(std::move(g));
    }
    const auto out = tinyguard_aggregate(grads);
    std::set<int> flagged(out.report.flagged.begin(), out.report.flagged.end());
    for (std::size_t i = 0; i < n; ++i) {
      const double s = out.report.normalized_scores[i];
      const bool should_flag = s > out.report.threshold;
      CHECK(flagged.count(grads[i].client_id) == (should_flag ? 1u : 0u));
      if (s < 0.0) CHECK(flagged.count(grads[i].client_id) == 0);
    }
    CHECK(out.report.threshold >= 0.0);
  }
}

TEST_CASE("benign equivalence: empty flag set means the unweighted mean") {
  Rng rng(999);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    const auto layout = tgtest::random_layout(rng, 10, 2);
    std::vector<GradientUpdate> grads;
    for (std::size_t i = 0; i < n; ++i) {
      grads.push_back(tgtest::random_values(rng, layout, static_cast<int>(i)));
    }
    DetectorConfig cfg;
    cfg.lambda = 1e6;  // force the benign path
    const auto out = tinyguard_aggregate(grads, cfg);
    REQUIRE(out.report.flagged.empty());
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto mean = mean_update(grads, all);
    for (std::size_t j = 0; j < mean.values.size(); ++j) {
      CHECK(std::abs(out.aggregate.values[j] - mean.values[j]) < 1e-12);
    }
  }
}

TEST_CASE("permutation equivariance of scores and flags") {
  Rng rng(31337);
  const std::size_t n = 9;
  const auto layout = tgtest::random_layout(rng, 14, 2);
  std::vector<GradientUpdate> grads;
  for (std::size_t i = 0; i < n; ++i) {
    auto g = tgtest::random_values(rng, layout, static_cast<int>(i));
    if (i == 4) {
      for (auto& v : g.values) v *= 80.0;
    }
    grads.push_back(std::move(g));
  }
  const auto base = tinyguard_aggregate(grads);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<GradientUpdate> permuted;
  for (std::size_t i : perm) permuted.push_back(grads[i]);
  const auto shuffled = tinyguard_aggregate(permuted);

  for (std::size_t i = 0; i < n; ++i) {
    CHECK(shuffled.report.raw_scores[i] ==
          doctest::Approx(base.report.raw_scores[perm[i]]).epsilon(1e-12));
  }
  std::set<int> a(base.report.flagged.begin(), base.report.flagged.end());
  std::set<int> b(shuffled.report.flagged.begin(), shuffled.report.flagged.end());
  CHECK(a == b);
}

TEST_CASE("single client aggregates to itself without flags") {
  const auto g = tgtest::make_dense({1, 2, 3}, 0);
  const auto out = tinyguard_aggregate({g});
  CHECK(out.report.flagged.empty());
  CHECK(out.aggregate.values == g.values);
  CHECK_THROWS_AS(tinyguard_aggregate({}), ConfigError);
}

TEST_CASE("anomaly report serializes scores, threshold, and flags") {
  Rng rng(2);
  const auto layout = tgtest::random_layout(rng, 8, 2);
  std::vector<GradientUpdate> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(tgtest::random_values(rng, layout, i));
  const auto out = tinyguard_aggregate(grads);
  const auto json = anomaly_report_json(out.report, 3);
  CHECK(json.find("\"round\":3") != std::string::npos);
  CHECK(json.find("\"threshold\"") != std::string::npos);
  CHECK(json.find("\"raw_scores\"") != std::string::npos);
  CHECK(json.find("\"flagged\"") != std::string::npos);
}
