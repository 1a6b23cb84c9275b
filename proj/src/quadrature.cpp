#include "ecal/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>
#include <utility>

#include "ecal/error.hpp"

namespace ecal {
namespace {

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix.
Eigen::VectorXd jacobi_eigenvalues(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, offdiag, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw SolverError("Jacobi matrix eigensolve failed");
  return solver.eigenvalues();
}

QuadratureRule build_hermite(int n) {
  const Eigen::VectorXd off = Eigen::VectorXd::LinSpaced(n - 1, 1, n - 1).cwiseSqrt();
  QuadratureRule rule{jacobi_eigenvalues(Eigen::VectorXd::Zero(n), off), Eigen::VectorXd(n)};

  // Newton polish on the orthonormal recurrence, then Christoffel weights
  // w = 1 / sum_k p_k(x)^2.
  for (int i = 0; i < n; ++i) {
    double x = rule.nodes[i];
    double norm2 = 0;
    for (int pass = 0; pass < 3; ++pass) {
      double prev = 0, cur = 1;
      norm2 = 1;
      for (int k = 0; k < n; ++k) {
        const double next = (x * cur - std::sqrt(double(k)) * prev) / std::sqrt(double(k + 1));
        prev = cur;
        cur = next;
        if (k + 1 < n) norm2 += cur * cur;
      }
      // cur = p_n, prev = p_{n-1}; p_n' = sqrt(n) p_{n-1}
      if (pass < 2) x -= cur / (std::sqrt(double(n)) * prev);
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / norm2;
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

QuadratureRule build_legendre(int n) {
  Eigen::VectorXd off(n - 1);
  for (int k = 1; k < n; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  QuadratureRule rule{jacobi_eigenvalues(Eigen::VectorXd::Zero(n), off), Eigen::VectorXd(n)};

  for (int i = 0; i < n; ++i) {
    double x = rule.nodes[i], dp = 0;
    for (int pass = 0; pass < 3; ++pass) {
      double prev = 1, cur = x;
      for (int k = 1; k < n; ++k) {
        const double next = ((2 * k + 1) * x * cur - k * prev) / (k + 1);
        prev = cur;
        cur = next;
      }
      dp = n * (x * cur - prev) / (x * x - 1);
      if (pass < 2) x -= cur / dp;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1 - x * x) * dp * dp);
  }
  return rule;
}

enum class Family { hermite, legendre };

std::shared_ptr<const QuadratureRule> cached(Family family, int order, QuadratureRule (*build)(int)) {
  static std::mutex mutex;
  static std::map<std::pair<Family, int>, std::shared_ptr<const QuadratureRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{family, order}];
  if (!slot) slot = std::make_shared<const QuadratureRule>(build(order));
  return slot;
}

}  // namespace

std::shared_ptr<const QuadratureRule> gauss_hermite(int order) {
  if (order < 2) throw InvalidInput("Gauss-Hermite order must be at least 2");
  return cached(Family::hermite, order, build_hermite);
}

std::shared_ptr<const QuadratureRule> gauss_legendre(int order) {
  if (order < 2) throw InvalidInput("Gauss-Legendre order must be at least 2");
  return cached(Family::legendre, order, build_legendre);
}

}  // namespace ecal
