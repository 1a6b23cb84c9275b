#pragma once

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "ecal/error.hpp"
#include "ecal/labeled_logits.hpp"
#include "ecal/metrics.hpp"

namespace ecal {

enum class FitMethod { ec, ts, ec_topn };

std::string_view to_string(FitMethod method);
FitMethod parse_fit_method(std::string_view name);

/// A fitted temperature plus what the solver saw.
///
/// `residual` is the defining condition evaluated at `temperature`:
/// mean confidence minus accuracy for EC, d NLL / d log T for TS.
struct TemperatureFit {
  double temperature = 1;
  FitMethod method = FitMethod::ec;
  double residual = 0;
  int iterations = 0;
  bool clamped = false;
  int top_n = 1;
};

struct FitOptions {
  double tol = 1e-10;
  double t_min = 1e-4;
  double t_max = 1e4;
  int max_iter = 200;
};

template <typename Scalar>
Scalar mean_confidence(const BasicLabeledLogits<Scalar>& data, Scalar temperature) {
  detail::check_temperature(temperature);
  Scalar total = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    total += detail::max_probability(row, detail::first_argmax(row), temperature);
  }
  return total / Scalar(data.rows());
}

/// Mean over rows of the summed N largest softmax probabilities.
template <typename Scalar>
Scalar mean_topn_confidence(const BasicLabeledLogits<Scalar>& data, int top_n, Scalar temperature) {
  detail::check_temperature(temperature);
  if (top_n == 1) return mean_confidence(data, temperature);
  Scalar total = 0;
  std::vector<Scalar> probs(static_cast<std::size_t>(data.classes()));
  for (Index i = 0; i < data.rows(); ++i) {
    const auto p = softmax_confidence(data.row(i), temperature).probs;
    std::copy(p.data(), p.data() + p.size(), probs.begin());
    std::partial_sort(probs.begin(), probs.begin() + top_n, probs.end(), std::greater<>());
    for (int k = 0; k < top_n; ++k) total += probs[static_cast<std::size_t>(k)];
  }
  return total / Scalar(data.rows());
}

/// Fraction of rows whose label ranks among the N largest logits. Ties are
/// ranked by class index, matching the argmax rule.
template <typename Scalar>
Scalar topn_accuracy(const BasicLabeledLogits<Scalar>& data, int top_n) {
  Index hits = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    const int y = data.label(i);
    Index ahead = 0;
    for (Index k = 0; k < row.size(); ++k)
      if (row(k) > row(y) || (row(k) == row(y) && k < y)) ++ahead;
    if (ahead < top_n) ++hits;
  }
  return Scalar(hits) / Scalar(data.rows());
}

namespace detail {

inline void check_bracket(const FitOptions& opt) {
  if (!(opt.t_min > 0) || !(opt.t_max > opt.t_min))
    throw InvalidInput("temperature bracket must satisfy 0 < t_min < t_max");
}

// Bisection in log T on a confidence map that decreases in T.
template <typename ConfidenceFn>
TemperatureFit bisect_confidence(ConfidenceFn&& confidence, double target, double floor,
                                 FitMethod method, const FitOptions& opt) {
  check_bracket(opt);
  if (target < floor)
    throw UnsatisfiableTarget("accuracy " + std::to_string(target) +
                              " is below the infinite-temperature confidence floor " +
                              std::to_string(floor));

  TemperatureFit fit;
  fit.method = method;

  const double at_min = confidence(opt.t_min);
  if (target >= at_min) {
    fit.temperature = opt.t_min;
    fit.residual = at_min - target;
    fit.clamped = true;
    return fit;
  }
  const double at_max = confidence(opt.t_max);
  if (target <= at_max) {
    fit.temperature = opt.t_max;
    fit.residual = at_max - target;
    fit.clamped = true;
    return fit;
  }

  double lo = std::log(opt.t_min);
  double hi = std::log(opt.t_max);
  double mid = 0.5 * (lo + hi);
  double gap = confidence(std::exp(mid)) - target;
  int it = 1;
  while (std::abs(gap) > opt.tol && hi - lo > 1e-12 && it < opt.max_iter) {
    (gap > 0 ? lo : hi) = mid;
    mid = 0.5 * (lo + hi);
    gap = confidence(std::exp(mid)) - target;
    ++it;
  }
  fit.temperature = std::exp(mid);
  fit.residual = gap;
  fit.iterations = it;
  return fit;
}

// Mean NLL of the labels under softmax(z / T) and its derivative in log T.
template <typename Scalar>
std::pair<double, double> nll_and_slope(const BasicLabeledLogits<Scalar>& data, double temperature) {
  double nll = 0, slope = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    const auto row = data.row(i);
    const double top = static_cast<double>(row.maxCoeff());
    double partition = 0, weighted = 0;
    for (Index k = 0; k < row.size(); ++k) {
      const double e = std::exp((static_cast<double>(row(k)) - top) / temperature);
      partition += e;
      weighted += e * static_cast<double>(row(k));
    }
    const double zy = static_cast<double>(row(data.label(i)));
    nll += -(zy - top) / temperature + std::log(partition);
    slope += (zy - weighted / partition) / temperature;
  }
  const auto n = static_cast<double>(data.rows());
  return {nll / n, slope / n};
}

}  // namespace detail

template <typename Scalar>
double validation_nll(const BasicLabeledLogits<Scalar>& data, double temperature) {
  detail::check_temperature(temperature);
  return detail::nll_and_slope(data, temperature).first;
}

/// Expectation consistency: the temperature at which mean confidence equals
/// validation accuracy.
template <typename Scalar>
TemperatureFit fit_ec(const BasicLabeledLogits<Scalar>& data, const FitOptions& opt = {}) {
  const double target = static_cast<double>(accuracy(data));
  const double floor = 1.0 / static_cast<double>(data.classes());
  return detail::bisect_confidence(
      [&](double t) { return static_cast<double>(mean_confidence(data, static_cast<Scalar>(t))); },
      target, floor, FitMethod::ec, opt);
}

/// Expectation consistency against top-N accuracy, 1 <= N < K.
template <typename Scalar>
TemperatureFit fit_ec_topn(const BasicLabeledLogits<Scalar>& data, int top_n, const FitOptions& opt = {}) {
  if (top_n < 1 || top_n >= data.classes())
    throw InvalidInput("top-N must satisfy 1 <= N < K (N = " + std::to_string(top_n) +
                       ", K = " + std::to_string(data.classes()) + ")");
  const double target = static_cast<double>(topn_accuracy(data, top_n));
  const double floor = static_cast<double>(top_n) / static_cast<double>(data.classes());
  auto fit = detail::bisect_confidence(
      [&](double t) {
        return static_cast<double>(mean_topn_confidence(data, top_n, static_cast<Scalar>(t)));
      },
      target, floor, FitMethod::ec_topn, opt);
  fit.top_n = top_n;
  return fit;
}

/// Temperature scaling: minimise validation NLL over log T.
///
/// A 64-point grid on [log t_min, log t_max] picks the bracket; Brent refines
/// it and, when the bracket straddles a sign change of the slope, a root solve
/// on the analytic slope pins the optimum to ~1e-12 in log T.
template <typename Scalar>
TemperatureFit fit_ts(const BasicLabeledLogits<Scalar>& data, const FitOptions& opt = {}) {
  detail::check_bracket(opt);
  constexpr int kGrid = 64;
  const double lo = std::log(opt.t_min), hi = std::log(opt.t_max);
  auto nll = [&](double log_t) { return detail::nll_and_slope(data, std::exp(log_t)).first; };
  auto slope = [&](double log_t) { return detail::nll_and_slope(data, std::exp(log_t)).second; };

  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int g = 0; g < kGrid; ++g) {
    const double v = nll(lo + (hi - lo) * g / (kGrid - 1));
    if (v < best_value) best_value = v, best = g;
  }
  const double step = (hi - lo) / (kGrid - 1);
  const double a = lo + step * std::max(best - 1, 0);
  const double b = lo + step * std::min(best + 1, kGrid - 1);

  TemperatureFit fit;
  fit.method = FitMethod::ts;

  std::uintmax_t iters = static_cast<std::uintmax_t>(opt.max_iter);
  auto [x, fx] = boost::math::tools::brent_find_minima(nll, a, b, std::numeric_limits<double>::digits / 2, iters);
  (void)fx;
  fit.iterations = static_cast<int>(iters);

  const double sa = slope(a), sb = slope(b);
  if (sa < 0 && sb > 0) {
    std::uintmax_t root_iters = static_cast<std::uintmax_t>(opt.max_iter);
    auto [r0, r1] = boost::math::tools::toms748_solve(
        slope, a, b, sa, sb, [](double u, double v) { return std::abs(u - v) <= 1e-13; }, root_iters);
    x = 0.5 * (r0 + r1);
    fit.iterations += static_cast<int>(root_iters);
  }

  // Endpoint minimiser: the slope at the boundary points back into the bracket.
  if (best == 0 && slope(lo) >= 0) {
    x = lo;
    fit.clamped = true;
  } else if (best == kGrid - 1 && slope(hi) <= 0) {
    x = hi;
    fit.clamped = true;
  }
  fit.temperature = fit.clamped ? (x == lo ? opt.t_min : opt.t_max) : std::exp(x);
  fit.residual = slope(x);
  return fit;
}

template <typename Scalar>
BasicLabeledLogits<Scalar> apply_temperature(const BasicLabeledLogits<Scalar>& data, double temperature) {
  detail::check_temperature(temperature);
  return BasicLabeledLogits<Scalar>(data.logits() / static_cast<Scalar>(temperature), data.labels());
}

template <typename Scalar>
BasicLabeledLogits<Scalar> apply_temperature(const BasicLabeledLogits<Scalar>& data, const TemperatureFit& fit) {
  return apply_temperature(data, fit.temperature);
}

}  // namespace ecal
