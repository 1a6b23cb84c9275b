#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>

namespace ecal {

/// Nodes and weights of an interpolatory rule. The weights of a Hermite
/// rule sum to 1: it integrates against the standard normal density.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return nodes.size(); }
};

/// Gauss-Hermite rule for E_{x ~ N(0,1)}[f(x)] (probabilists' weight).
/// Rules are built once per order and shared.
std::shared_ptr<const QuadratureRule> gauss_hermite(int order);

/// Gauss-Legendre rule on [-1, 1].
std::shared_ptr<const QuadratureRule> gauss_legendre(int order);

/// E_{x ~ N(mean, variance)}[f(x)].
template <typename F>
double gaussian_expectation(const QuadratureRule& rule, double mean, double variance, F&& f) {
  const double scale = std::sqrt(variance);
  double acc = 0;
  for (Eigen::Index i = 0; i < rule.size(); ++i) acc += rule.weights[i] * f(mean + scale * rule.nodes[i]);
  return acc;
}

/// Integral of f over [a, b] with a Legendre rule.
template <typename F>
double integrate(const QuadratureRule& rule, double a, double b, F&& f) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double acc = 0;
  for (Eigen::Index i = 0; i < rule.size(); ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return half * acc;
}

}  // namespace ecal
