#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ecal/labeled_logits.hpp"

namespace ecal::test {

using Rng = std::mt19937_64;

/// Logits with i.i.d. N(0, scale^2) entries; labels drawn from
/// softmax(logits / t_true), so the data are calibrated at T = t_true.
inline LabeledLogits random_logits(Rng& rng, Index n, Index k, double scale = 3.0, double t_true = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LogitMatrix<double> z(n, k);
  LabelVector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) z(i, j) = normal(rng);
    Eigen::VectorXd p = ((z.row(i).array() - z.row(i).maxCoeff()) / t_true).exp().transpose();
    p /= p.sum();
    double u = unif(rng), acc = 0;
    y[i] = static_cast<int>(k - 1);
    for (Index j = 0; j < k; ++j) {
      acc += p[j];
      if (u < acc) {
        y[i] = static_cast<int>(j);
        break;
      }
    }
  }
  return LabeledLogits(std::move(z), std::move(y));
}

/// Two-class rows (0, margin_i) with the given labels.
inline LabeledLogits binary_rows(const std::vector<double>& margins, const std::vector<int>& labels) {
  LogitMatrix<double> z = LogitMatrix<double>::Zero(static_cast<Index>(margins.size()), 2);
  LabelVector y(static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < margins.size(); ++i) {
    z(static_cast<Index>(i), 1) = margins[i];
    y[static_cast<Index>(i)] = labels[i];
  }
  return LabeledLogits(std::move(z), std::move(y));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace ecal::test
