#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>

#include "ecal/error.hpp"

namespace ecal {

using Index = Eigen::Index;

template <typename Scalar>
using LogitMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using LabelVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

/// n x K raw classifier scores together with n labels in [0, K).
///
/// The constructor validates every invariant, so a live object is always
/// usable by the metric and calibration routines without further checks.
template <typename Scalar>
class BasicLabeledLogits {
 public:
  using Matrix = LogitMatrix<Scalar>;

  BasicLabeledLogits(Matrix logits, LabelVector labels)
      : logits_(std::move(logits)), labels_(std::move(labels)) {
    if (logits_.cols() < 2) throw InvalidInput("need at least two classes");
    if (logits_.rows() < 1) throw InvalidInput("need at least one sample");
    if (labels_.size() != logits_.rows())
      throw InvalidInput("label count " + std::to_string(labels_.size()) +
                         " does not match row count " + std::to_string(logits_.rows()));
    if (!logits_.allFinite()) throw InvalidInput("logits must be finite");
    for (Index i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || labels_[i] >= logits_.cols())
        throw InvalidInput("label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                           " is outside [0, " + std::to_string(logits_.cols()) + ")");
    }
  }

  const Matrix& logits() const noexcept { return logits_; }
  const LabelVector& labels() const noexcept { return labels_; }
  Index rows() const noexcept { return logits_.rows(); }
  Index classes() const noexcept { return logits_.cols(); }

  auto row(Index i) const { return logits_.row(i); }
  int label(Index i) const { return labels_[i]; }

  friend bool operator==(const BasicLabeledLogits& a, const BasicLabeledLogits& b) {
    return a.logits_.rows() == b.logits_.rows() && a.logits_.cols() == b.logits_.cols() &&
           a.logits_ == b.logits_ && a.labels_ == b.labels_;
  }

 private:
  Matrix logits_;
  LabelVector labels_;
};

using LabeledLogits = BasicLabeledLogits<double>;

}  // namespace ecal
