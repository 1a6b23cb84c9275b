#include "ecal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecal/error.hpp"

namespace ecal {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void fill_inputs(Eigen::MatrixXd& X, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(X.cols())));
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = 0; j < X.cols(); ++j) X(i, j) = normal(rng);
}

std::vector<bool> class_mask(std::span<const int> classes, Index k) {
  if (classes.empty()) throw InvalidInput("class list must not be empty");
  std::vector<bool> mask(static_cast<std::size_t>(k), false);
  for (int c : classes) {
    if (c < 0 || c >= k)
      throw InvalidInput("class " + std::to_string(c) + " is outside [0, " + std::to_string(k) + ")");
    mask[static_cast<std::size_t>(c)] = true;
  }
  return mask;
}

}  // namespace

std::string_view to_string(Target target) {
  switch (target) {
    case Target::logit: return "logit";
    case Target::affine: return "affine";
    case Target::constant: return "constant";
  }
  return "unknown";
}

Target parse_target(std::string_view name) {
  if (name == "logit") return Target::logit;
  if (name == "affine") return Target::affine;
  if (name == "constant") return Target::constant;
  throw InvalidInput("unknown target '" + std::string(name) + "' (expected logit, affine or constant)");
}

void GenerativeModel::validate() const {
  if (!(t_star > 0) || !std::isfinite(t_star)) throw InvalidInput("teacher temperature must be positive");
  if (!(rho > 0) || !std::isfinite(rho)) throw InvalidInput("teacher second moment must be positive");
}

double target_activation(Target target, double z) {
  switch (target) {
    case Target::logit: return sigmoid(z);
    case Target::affine: return z < -1 ? 0.0 : z > 1 ? 1.0 : 0.5 * (z + 1);
    case Target::constant: return z < -1 ? 0.0 : z > 1 ? 1.0 : 0.5;
  }
  return 0.5;
}

int draw_label(const GenerativeModel& model, double teacher_preactivation, Rng& rng) {
  const double p = target_activation(model, teacher_preactivation / model.t_star);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1 : -1;
}

SyntheticDataset sample_with_teacher(const GenerativeModel& model, const Eigen::VectorXd& w_star, Index n,
                                     Rng& rng) {
  model.validate();
  if (n < 1 || w_star.size() < 1) throw InvalidInput("n and d must be at least 1");
  SyntheticDataset out;
  out.w_star = w_star;
  out.X.resize(n, w_star.size());
  fill_inputs(out.X, rng);
  const Eigen::VectorXd pre = out.X * w_star;
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) out.y[i] = draw_label(model, pre[i], rng);
  return out;
}

SyntheticDataset sample_with_teacher(const GenerativeModel& model, const Eigen::VectorXd& w_star, Index n,
                                     std::uint64_t seed) {
  Rng rng(seed);
  auto out = sample_with_teacher(model, w_star, n, rng);
  out.seed = seed;
  return out;
}

SyntheticDataset sample_dataset(const GenerativeModel& model, Index n, Index d, std::uint64_t seed) {
  model.validate();
  if (n < 1 || d < 1) throw InvalidInput("n and d must be at least 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(model.rho));
  Eigen::VectorXd w_star(d);
  for (Index j = 0; j < d; ++j) w_star[j] = normal(rng);
  auto out = sample_with_teacher(model, w_star, n, rng);
  out.seed = seed;
  return out;
}

EmpiricalOverlaps empirical_overlaps(const Eigen::VectorXd& w_star, const Eigen::VectorXd& w_hat) {
  const auto d = static_cast<double>(w_star.size());
  return {w_star.dot(w_hat) / d, w_hat.squaredNorm() / d, w_star.squaredNorm() / d};
}

EmpiricalOverlaps empirical_overlaps_gram(const Eigen::VectorXd& w_star, const Eigen::VectorXd& w_hat) {
  Eigen::Matrix<double, Eigen::Dynamic, 2> stacked(w_star.size(), 2);
  stacked << w_star, w_hat;
  const Eigen::Matrix2d gram = stacked.transpose() * stacked / static_cast<double>(w_star.size());
  return {gram(0, 1), gram(1, 1), gram(0, 0)};
}

double erm_objective(const SyntheticDataset& data, double lambda, const Eigen::VectorXd& w) {
  const Eigen::VectorXd z = data.X * w;
  double loss = 0;
  for (Index i = 0; i < z.size(); ++i) loss += softplus(-data.y[i] * z[i]);
  return loss + 0.5 * lambda * w.squaredNorm();
}

Eigen::VectorXd erm_gradient(const SyntheticDataset& data, double lambda, const Eigen::VectorXd& w) {
  const Eigen::VectorXd z = data.X * w;
  Eigen::VectorXd g(z.size());
  for (Index i = 0; i < z.size(); ++i) g[i] = -data.y[i] * sigmoid(-data.y[i] * z[i]);
  return data.X.transpose() * g + lambda * w;
}

ErmSolution erm_train(const SyntheticDataset& data, double lambda, const ErmOptions& opt) {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be non-negative");
  const Index n = data.samples(), d = data.dimension();
  if (lambda == 0 && n <= d)
    throw InvalidInput("lambda = 0 needs more samples than dimensions (the data are separable)");
  const double tol = opt.tol > 0 ? opt.tol : 1e-8 * static_cast<double>(n);

  ErmSolution out;
  out.lambda = lambda;
  out.w_hat = Eigen::VectorXd::Zero(d);
  double objective = erm_objective(data, lambda, out.w_hat);

  Eigen::VectorXd z(n), g(n), curv(n);
  Eigen::MatrixXd hessian(d, d);
  for (int it = 0;; ++it) {
    z.noalias() = data.X * out.w_hat;
    bool separating = true;
    for (Index i = 0; i < n; ++i) {
      const double margin = data.y[i] * z[i];
      separating = separating && margin > 0;
      const double s = sigmoid(-margin);
      g[i] = -data.y[i] * s;
      curv[i] = s * (1 - s);
    }
    if (lambda == 0 && separating && it > 0)
      throw InvalidInput("data are linearly separable; lambda = 0 has no finite minimiser");

    const Eigen::VectorXd grad = data.X.transpose() * g + lambda * out.w_hat;
    out.grad_norm = grad.norm();
    out.iterations = it;
    if (out.grad_norm <= tol) break;
    if (it >= opt.max_iter)
      throw SolverError("ERM did not converge in " + std::to_string(opt.max_iter) +
                        " Newton steps (gradient norm " + std::to_string(out.grad_norm) + ")");

    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(
        (curv.cwiseSqrt().asDiagonal() * data.X).transpose());
    hessian.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian.selfadjointView<Eigen::Lower>());
    const Eigen::VectorXd step = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      if (lambda == 0) throw InvalidInput("singular Hessian at lambda = 0; the data are (nearly) separable");
      throw SolverError("singular Newton system in ERM");
    }

    // Armijo backtracking.
    const double descent = grad.dot(step);
    double t = 1.0, trial = 0;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      trial = erm_objective(data, lambda, out.w_hat + t * step);
      if (trial <= objective + 1e-4 * t * descent) break;
    }
    out.w_hat += t * step;
    objective = trial;
  }

  const auto ov = empirical_overlaps(data.w_star, out.w_hat);
  out.m_emp = ov.m;
  out.q_emp = ov.q;
  out.rho_emp = ov.rho;
  return out;
}

LabeledLogits to_labeled_logits(const SyntheticDataset& data, const Eigen::VectorXd& w_hat) {
  LogitMatrix<double> logits = LogitMatrix<double>::Zero(data.samples(), 2);
  logits.col(1) = data.X * w_hat;
  LabelVector labels = (data.y.array() > 0).cast<int>();
  return LabeledLogits(std::move(logits), std::move(labels));
}

Corrupted<LabeledLogits> corrupt_labels(const LabeledLogits& data, std::span<const int> classes,
                                        std::uint64_t seed) {
  const auto mask = class_mask(classes, data.classes());
  Rng rng(seed);
  std::uniform_int_distribution<int> uniform(0, static_cast<int>(data.classes()) - 1);
  LabelVector labels = data.labels();
  Index touched = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (!mask[static_cast<std::size_t>(labels[i])]) continue;
    labels[i] = uniform(rng);
    ++touched;
  }
  return {LabeledLogits(data.logits(), std::move(labels)), touched};
}

Corrupted<SyntheticDataset> corrupt_labels(const SyntheticDataset& data, std::span<const int> classes,
                                           std::uint64_t seed) {
  const auto mask = class_mask(classes, 2);
  Rng rng(seed);
  std::uniform_int_distribution<int> uniform(0, 1);
  Corrupted<SyntheticDataset> out{data, 0};
  for (Index i = 0; i < out.data.y.size(); ++i) {
    if (!mask[out.data.y[i] > 0 ? 1 : 0]) continue;
    out.data.y[i] = uniform(rng) == 1 ? 1 : -1;
    ++out.touched;
  }
  return out;
}

}  // namespace ecal
