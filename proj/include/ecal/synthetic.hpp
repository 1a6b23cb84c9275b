#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "ecal/labeled_logits.hpp"

namespace ecal {

/// Teacher link functions P(y = +1 | z).
enum class Target { logit, affine, constant };

std::string_view to_string(Target target);
Target parse_target(std::string_view name);

/// Teacher: w* ~ N(0, rho I_d), x ~ N(0, I_d / d),
/// P(y = +1 | x) = target(w*.x / t_star).
struct GenerativeModel {
  Target target = Target::logit;
  double t_star = 1.0;
  double rho = 1.0;

  void validate() const;
};

double target_activation(Target target, double z);

inline double target_activation(const GenerativeModel& model, double z) {
  return target_activation(model.target, z);
}

using Rng = std::mt19937_64;

/// Draws y in {-1, +1} given the teacher pre-activation w*.x.
int draw_label(const GenerativeModel& model, double teacher_preactivation, Rng& rng);

struct SyntheticDataset {
  Eigen::MatrixXd X;        // n x d, rows ~ N(0, I / d)
  Eigen::VectorXi y;        // +-1
  Eigen::VectorXd w_star;   // d
  std::uint64_t seed = 0;

  Index samples() const { return X.rows(); }
  Index dimension() const { return X.cols(); }
};

/// Draws w*, then X, then y. Fully determined by `seed`.
SyntheticDataset sample_dataset(const GenerativeModel& model, Index n, Index d, std::uint64_t seed);

/// Draws n fresh samples for a fixed teacher vector.
SyntheticDataset sample_with_teacher(const GenerativeModel& model, const Eigen::VectorXd& w_star,
                                     Index n, std::uint64_t seed);

/// Same, continuing an existing generator.
SyntheticDataset sample_with_teacher(const GenerativeModel& model, const Eigen::VectorXd& w_star,
                                     Index n, Rng& rng);

struct EmpiricalOverlaps {
  double m = 0;    // w*.w / d
  double q = 0;    // |w|^2 / d
  double rho = 0;  // |w*|^2 / d
};

EmpiricalOverlaps empirical_overlaps(const Eigen::VectorXd& w_star, const Eigen::VectorXd& w_hat);

/// Same quantities from the 2x2 Gram matrix of [w*, w].
EmpiricalOverlaps empirical_overlaps_gram(const Eigen::VectorXd& w_star, const Eigen::VectorXd& w_hat);

struct ErmOptions {
  double tol = -1;  // gradient-norm target; negative means 1e-8 * n
  int max_iter = 200;
};

struct ErmSolution {
  Eigen::VectorXd w_hat;
  double lambda = 0;
  double grad_norm = 0;
  int iterations = 0;
  double m_emp = 0;
  double q_emp = 0;
  double rho_emp = 0;
};

/// Regularised logistic regression
///   min_w  sum_i log(1 + exp(-y_i w.x_i)) + lambda/2 |w|^2
/// by damped Newton. lambda = 0 is accepted only while the data are not
/// linearly separable; a separating iterate raises InvalidInput.
ErmSolution erm_train(const SyntheticDataset& data, double lambda, const ErmOptions& opt = {});

/// Regularised risk at w (the quantity erm_train minimises).
double erm_objective(const SyntheticDataset& data, double lambda, const Eigen::VectorXd& w);

Eigen::VectorXd erm_gradient(const SyntheticDataset& data, double lambda, const Eigen::VectorXd& w);

/// Two-class logits (0, w.x) per row with labels -1 -> 0, +1 -> 1, so that
/// softmax class-1 probability equals sigmoid(w.x).
LabeledLogits to_labeled_logits(const SyntheticDataset& data, const Eigen::VectorXd& w_hat);

template <typename Data>
struct Corrupted {
  Data data;
  Index touched = 0;
};

/// Every row whose label is in `classes` gets a label drawn uniformly from
/// [0, K). Deterministic in `seed`.
Corrupted<LabeledLogits> corrupt_labels(const LabeledLogits& data, std::span<const int> classes,
                                        std::uint64_t seed);

/// Binary variant on +-1 labels; classes use the 0/1 encoding (-1 -> 0).
Corrupted<SyntheticDataset> corrupt_labels(const SyntheticDataset& data, std::span<const int> classes,
                                           std::uint64_t seed);

}  // namespace ecal
