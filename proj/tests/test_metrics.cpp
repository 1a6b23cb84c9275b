#include "doctest.h"

#include <cmath>

#include "ecal/error.hpp"
#include "ecal/metrics.hpp"
#include "support.hpp"

using namespace ecal;
using ecal::test::binary_rows;

TEST_CASE("softmax confidence on small rows") {
  Eigen::RowVector2d zero(0, 0);
  auto c = softmax_confidence(zero, 1.0);
  CHECK(c.probs[0] == doctest::Approx(0.5));
  CHECK(c.prediction == 0);
  CHECK(c.confidence == doctest::Approx(0.5));

  Eigen::RowVector2d z(std::log(3.0), 0);
  c = softmax_confidence(z, 1.0);
  CHECK(c.probs[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(c.probs[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(softmax_confidence(z, 2.0).confidence == doctest::Approx(0.6339745962155614).epsilon(1e-13));

  CHECK_THROWS_AS(softmax_confidence(z, 0.0), InvalidInput);
  CHECK_THROWS_AS(softmax_confidence(z, -1.0), InvalidInput);
  Eigen::RowVector2d bad(std::nan(""), 0);
  CHECK_THROWS_AS(softmax_confidence(bad, 1.0), InvalidInput);
}

TEST_CASE("softmax stays finite for huge logits") {
  Eigen::RowVector3d z(1000, 999, -1000);
  auto c = softmax_confidence(z, 1.0);
  CHECK(c.probs.allFinite());
  CHECK(c.probs.sum() == doctest::Approx(1.0));
  CHECK(c.confidence == doctest::Approx(1 / (1 + std::exp(-1.0))));
}

TEST_CASE("accuracy counts argmax hits") {
  CHECK(accuracy(binary_rows({1, 2, 3}, {1, 1, 1})) == 1.0);
  CHECK(accuracy(binary_rows({1, 2, 3}, {0, 0, 0})) == 0.0);
  CHECK(accuracy(binary_rows({1, 2, 3, -1}, {1, 1, 1, 1})) == 0.75);
}

TEST_CASE("labeled logits validation") {
  LogitMatrix<double> z(2, 2);
  z << 0, 1, 1, 0;
  LabelVector ok(2), bad(2), short_(1);
  ok << 0, 1;
  bad << 0, 2;
  short_ << 0;
  CHECK_NOTHROW(LabeledLogits(z, ok));
  CHECK_THROWS_AS(LabeledLogits(z, bad), InvalidInput);
  CHECK_THROWS_AS(LabeledLogits(z, short_), InvalidInput);
  LogitMatrix<double> one_class(2, 1);
  one_class << 0, 0;
  CHECK_THROWS_AS(LabeledLogits(one_class, ok), InvalidInput);
  z(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(LabeledLogits(z, ok), InvalidInput);
}

TEST_CASE("binned ECE small cases") {
  // Confidence exactly 0.9 everywhere, 9 of 10 correct.
  const double m = std::log(9.0);
  auto data = binary_rows(std::vector<double>(10, m), {1, 1, 1, 1, 1, 1, 1, 1, 1, 0});
  CHECK(binned_ece(data, 1.0).ece == doctest::Approx(0.0).epsilon(1e-12));

  // One sample, confidence 0.8, correct.
  auto one = binary_rows({std::log(4.0)}, {1});
  CHECK(binned_ece(one, 1.0).ece == doctest::Approx(0.2));
}

TEST_CASE("binned ECE matches a hand loop on a 10-row fixture") {
  const std::vector<double> margins{-3.0, -0.2, 0.1, 0.4, 0.9, 1.3, 2.2, 2.5, 4.0, -1.1};
  const std::vector<int> labels{0, 1, 1, 0, 1, 1, 0, 1, 1, 0};
  auto data = binary_rows(margins, labels);

  // Oracle: explicit per-bin sums, confidence = max(p, 1 - p).
  const int B = 15;
  std::vector<double> conf(B, 0), hit(B, 0), cnt(B, 0);
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double p1 = ecal::test::sigmoid(margins[i]);
    const double c = std::max(p1, 1 - p1);
    int b = static_cast<int>(c * B);
    if (b == B) b = B - 1;
    const int pred = p1 > 0.5 ? 1 : 0;
    conf[b] += c;
    hit[b] += pred == labels[i];
    cnt[b] += 1;
  }
  double oracle = 0;
  for (int b = 0; b < B; ++b)
    if (cnt[b] > 0) oracle += std::abs(hit[b] - conf[b]) / 10.0;

  auto res = binned_ece(data, 1.0);
  CHECK(res.ece == doctest::Approx(oracle).epsilon(1e-14));
  int populated = 0;
  for (Index b = 0; b < res.bins.size(); ++b) {
    CHECK(res.bins.count[b] == static_cast<Index>(cnt[b]));
    CHECK(res.bins.confidence[b].has_value() == (cnt[b] > 0));
    populated += cnt[b] > 0;
  }
  CHECK(populated > 2);
}

TEST_CASE("bin assignment at edges") {
  CHECK(confidence_bin(0.0, 15) == 0);
  CHECK(confidence_bin(1.0, 15) == 14);
  CHECK(confidence_bin(1.0 / 15, 15) == 1);
  CHECK(confidence_bin(0.999999, 15) == 14);
}

TEST_CASE("brier score") {
  auto zeros2 = binary_rows({0, 0, 0}, {0, 1, 0});
  CHECK(brier(zeros2) == doctest::Approx(0.5));

  LogitMatrix<double> z = LogitMatrix<double>::Zero(4, 10);
  LabelVector y(4);
  y << 0, 3, 7, 9;
  CHECK(brier(LabeledLogits(z, y)) == doctest::Approx(0.9));

  auto sure = binary_rows({200, -200}, {1, 0});
  CHECK(brier(sure) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reliability curve fixtures") {
  SUBCASE("all confident, all correct") {
    auto data = binary_rows({50, 60, -70}, {1, 1, 0});
    auto bins = reliability_curve(data, 1.0);
    CHECK(bins.count[14] == 3);
    CHECK(*bins.accuracy[14] == 1.0);
    for (int b = 0; b < 14; ++b) CHECK_FALSE(bins.accuracy[b].has_value());
  }
  SUBCASE("overconfident") {
    std::vector<int> labels(10, 0);
    for (int i = 0; i < 6; ++i) labels[i] = 1;
    auto data = binary_rows(std::vector<double>(10, std::log(9.0)), labels);
    auto bins = reliability_curve(data, 1.0);
    const Index b = confidence_bin(0.9, 15);
    REQUIRE(bins.gap(b).has_value());
    CHECK(*bins.gap(b) == doctest::Approx(0.3));
  }
  SUBCASE("calibrated sample") {
    ecal::test::Rng rng(3);
    auto data = ecal::test::random_logits(rng, 200000, 2, 2.0);
    auto bins = reliability_curve(data, 1.0, 10);
    for (Index b = 0; b < bins.size(); ++b) {
      if (bins.count[b] < 2000) continue;
      const double noise = 4 * std::sqrt(0.25 / static_cast<double>(bins.count[b]));
      CHECK(std::abs(*bins.gap(b)) < noise);
    }
  }
}

TEST_CASE("evaluate bundles the metrics") {
  auto data = binary_rows({1, -2, 3, 0.5}, {1, 0, 0, 1});
  auto r = evaluate(data, 1.5);
  CHECK(r.temperature == 1.5);
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.ece == doctest::Approx(binned_ece(data, 1.5).ece));
  CHECK(r.brier == doctest::Approx(brier(data, 1.5)));
}

TEST_CASE("float scalar instantiation") {
  LogitMatrix<float> z(2, 2);
  z << 2.f, 0.f, 0.f, 1.f;
  LabelVector y(2);
  y << 0, 1;
  BasicLabeledLogits<float> data(z, y);
  CHECK(accuracy(data) == 1.0f);
  CHECK(brier(data, 1.0f) == doctest::Approx(brier(LabeledLogits(z.cast<double>(), y), 1.0)).epsilon(1e-6));
}
