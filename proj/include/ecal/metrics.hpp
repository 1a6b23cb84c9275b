#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ecal/error.hpp"
#include "ecal/labeled_logits.hpp"

namespace ecal {

inline constexpr int kDefaultBins = 15;

template <typename Scalar>
struct Confidence {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probs;
  Index prediction = 0;
  Scalar confidence = 0;
};

namespace detail {

template <typename Scalar>
void check_temperature(Scalar temperature) {
  if (!(temperature > Scalar(0)) || !std::isfinite(static_cast<double>(temperature)))
    throw InvalidInput("temperature must be positive and finite");
}

// First index of the largest entry; ties go to the smallest index.
template <typename Derived>
Index first_argmax(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k)
    if (row(k) > row(best)) best = k;
  return best;
}

// Max softmax probability of row / T, without materialising the vector.
template <typename Derived, typename Scalar>
Scalar max_probability(const Eigen::MatrixBase<Derived>& row, Index top, Scalar temperature) {
  const Scalar top_logit = row(top);
  Scalar partition = 0;
  for (Index k = 0; k < row.size(); ++k) partition += std::exp((row(k) - top_logit) / temperature);
  return Scalar(1) / partition;
}

}  // namespace detail

/// Softmax of `row / temperature`, the predicted class and its probability.
/// Uses max-subtraction, so any finite row is safe.
template <typename Derived>
Confidence<typename Derived::Scalar> softmax_confidence(const Eigen::MatrixBase<Derived>& row,
                                                        typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  detail::check_temperature(temperature);
  if (row.size() < 1 || !row.allFinite()) throw InvalidInput("logits must be finite");

  Confidence<Scalar> out;
  out.prediction = detail::first_argmax(row);
  const Scalar top = row(out.prediction);
  out.probs = ((row.derived().transpose().array() - top) / temperature).exp().matrix();
  out.probs /= out.probs.sum();
  out.confidence = out.probs(out.prediction);
  return out;
}

/// Fraction of rows whose argmax equals the label. The temperature is
/// accepted for interface symmetry; argmax does not depend on it.
template <typename Scalar>
Scalar accuracy(const BasicLabeledLogits<Scalar>& data, Scalar temperature = Scalar(1)) {
  detail::check_temperature(temperature);
  Index correct = 0;
  for (Index i = 0; i < data.rows(); ++i)
    if (detail::first_argmax(data.row(i)) == data.label(i)) ++correct;
  return Scalar(correct) / Scalar(data.rows());
}

/// Equal-width confidence histogram on [0, 1]. Bins with no samples keep
/// `std::nullopt` for their confidence and accuracy.
struct ReliabilityBins {
  Eigen::VectorXd edges;
  std::vector<Index> count;
  std::vector<std::optional<double>> confidence;
  std::vector<std::optional<double>> accuracy;

  Index size() const { return static_cast<Index>(count.size()); }

  /// confidence - accuracy for a populated bin.
  std::optional<double> gap(Index b) const {
    if (!confidence[b]) return std::nullopt;
    return *confidence[b] - *accuracy[b];
  }
};

struct EceResult {
  double ece = 0;
  ReliabilityBins bins;
};

/// Bin `b` covers [b/B, (b+1)/B); the last bin also includes 1.
inline Index confidence_bin(double confidence, Index bins) {
  const auto b = static_cast<Index>(std::floor(confidence * static_cast<double>(bins)));
  return std::clamp<Index>(b, 0, bins - 1);
}

template <typename Scalar>
ReliabilityBins reliability_curve(const BasicLabeledLogits<Scalar>& data, Scalar temperature,
                                  int bins = kDefaultBins) {
  detail::check_temperature(temperature);
  if (bins < 1) throw InvalidInput("bin count must be at least 1");

  ReliabilityBins out;
  out.edges = Eigen::VectorXd::LinSpaced(bins + 1, 0.0, 1.0);
  out.count.assign(bins, 0);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<Index> hits(bins, 0);

  for (Index i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    const Index top = detail::first_argmax(row);
    const double c = static_cast<double>(detail::max_probability(row, top, temperature));
    const Index b = confidence_bin(c, bins);
    ++out.count[b];
    conf_sum[b] += c;
    if (top == data.label(i)) ++hits[b];
  }

  out.confidence.resize(bins);
  out.accuracy.resize(bins);
  for (int b = 0; b < bins; ++b) {
    if (out.count[b] == 0) continue;
    const auto n_b = static_cast<double>(out.count[b]);
    out.confidence[b] = conf_sum[b] / n_b;
    out.accuracy[b] = static_cast<double>(hits[b]) / n_b;
  }
  return out;
}

/// Binned expected calibration error: sum_b (n_b / n) |acc_b - conf_b|.
template <typename Scalar>
EceResult binned_ece(const BasicLabeledLogits<Scalar>& data, Scalar temperature,
                     int bins = kDefaultBins) {
  EceResult out{0.0, reliability_curve(data, temperature, bins)};
  const auto n = static_cast<double>(data.rows());
  for (Index b = 0; b < out.bins.size(); ++b)
    if (auto g = out.bins.gap(b)) out.ece += static_cast<double>(out.bins.count[b]) / n * std::abs(*g);
  return out;
}

/// Mean over rows of sum_k (p_k - [y = k])^2.
template <typename Scalar>
Scalar brier(const BasicLabeledLogits<Scalar>& data, Scalar temperature = Scalar(1)) {
  detail::check_temperature(temperature);
  Scalar total = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    auto probs = softmax_confidence(data.row(i), temperature).probs;
    probs(data.label(i)) -= Scalar(1);
    total += probs.squaredNorm();
  }
  return total / Scalar(data.rows());
}

struct MetricsReport {
  double accuracy = 0;
  double ece = 0;
  double brier = 0;
  ReliabilityBins bins;
  double temperature = 1;
};

template <typename Scalar>
MetricsReport evaluate(const BasicLabeledLogits<Scalar>& data, Scalar temperature = Scalar(1),
                       int bins = kDefaultBins) {
  auto ece = binned_ece(data, temperature, bins);
  MetricsReport out;
  out.accuracy = static_cast<double>(accuracy(data, temperature));
  out.ece = ece.ece;
  out.brier = static_cast<double>(brier(data, temperature));
  out.bins = std::move(ece.bins);
  out.temperature = static_cast<double>(temperature);
  return out;
}

}  // namespace ecal
