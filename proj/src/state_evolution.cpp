#include "ecal/state_evolution.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "ecal/error.hpp"
#include "ecal/quadrature.hpp"

namespace ecal {
namespace {

constexpr double kLogTMin = -9.210340371976184;  // log 1e-4
constexpr double kLogTMax = 9.210340371976184;   // log 1e4

// Half-line integrals run over [0, kTail * sqrt(q)]; the Gaussian mass
// beyond is below 1e-23.
constexpr double kTail = 10.0;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

void check_converged_shape(const Overlaps& ov) {
  if (!(ov.q > 0) || !(ov.v > 0)) throw InvalidInput("overlaps need q > 0 and v > 0");
}

void check_temperature(double t) {
  if (!(t > 0) || !std::isfinite(t)) throw InvalidInput("temperature must be positive and finite");
}

int panel_nodes(int order) { return std::max(16, order / 4); }

// Gauss-Legendre panels of width sqrt(q)/2 covering [0, kTail sqrt(q)], plus
// any extra breakpoints.
struct HalfLine {
  std::vector<double> xi;
  std::vector<double> weight;  // includes the N(0, q) density
};

HalfLine half_line(double q, int order, std::vector<double> breaks = {}) {
  const double s = std::sqrt(q);
  for (int k = 0; k <= 2 * static_cast<int>(kTail); ++k) breaks.push_back(0.5 * k * s);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [s](double a, double b) { return std::abs(a - b) <= 1e-14 * s; }),
               breaks.end());

  const auto rule = gauss_legendre(panel_nodes(order));
  HalfLine out;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p], b = breaks[p + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (Index i = 0; i < rule->size(); ++i) {
      const double x = mid + half * rule->nodes[i];
      out.xi.push_back(x);
      out.weight.push_back(half * rule->weights[i] * normal_pdf(x / s) / s);
    }
  }
  return out;
}

// Student pre-activation grid with the teacher probability Z+(xi) cached.
struct Population {
  HalfLine grid;
  std::vector<double> z_plus;
};

double z_plus(const Overlaps& ov, const GenerativeModel& model, double xi, int order) {
  return z_star(model, 1, ov.m / ov.q * xi, teacher_variance(ov, model), order).value;
}

Population population(const Overlaps& ov, const GenerativeModel& model, int order,
                      std::vector<double> breaks = {}) {
  check_converged_shape(ov);
  Population pop{half_line(ov.q, order, std::move(breaks)), {}};
  pop.z_plus.reserve(pop.grid.xi.size());
  for (double xi : pop.grid.xi) pop.z_plus.push_back(z_plus(ov, model, xi, order));
  return pop;
}

// 2 * int_0^inf g(xi, Z+(xi)) N(xi | 0, q): every metric integrand is even.
template <typename F>
double symmetric_expectation(const Population& pop, F&& g) {
  double acc = 0;
  for (std::size_t i = 0; i < pop.grid.xi.size(); ++i) acc += pop.grid.weight[i] * g(pop.grid.xi[i], pop.z_plus[i]);
  return 2 * acc;
}

double mean_confidence_on(const Population& pop, double t) {
  return symmetric_expectation(pop, [t](double xi, double) { return sigmoid(xi / t); });
}

double loss_on(const Population& pop, double t) {
  return symmetric_expectation(pop, [t](double xi, double zp) {
    return zp * softplus(-xi / t) + (1 - zp) * softplus(xi / t);
  });
}

// d loss / d log T.
double loss_slope_on(const Population& pop, double t) {
  return symmetric_expectation(pop, [t](double xi, double zp) { return xi / t * (zp - sigmoid(xi / t)); });
}

double error_on(const Population& pop) {
  return symmetric_expectation(pop, [](double, double zp) { return 1 - zp; });
}

// Sign changes of sigmoid(xi / T) - Z+(xi) on (0, kTail sqrt(q)).
std::vector<double> calibration_roots(const Overlaps& ov, const GenerativeModel& model, double t, int order) {
  auto delta = [&](double xi) { return sigmoid(xi / t) - z_plus(ov, model, xi, order); };
  const double hi = kTail * std::sqrt(ov.q);
  constexpr int kScan = 400;
  std::vector<double> roots;
  double a = hi / kScan, fa = delta(a);
  for (int k = 2; k <= kScan; ++k) {
    const double b = hi * k / kScan, fb = delta(b);
    if ((fa < 0) != (fb < 0) && fa != 0 && fb != 0) {
      std::uintmax_t iters = 100;
      auto [r0, r1] = boost::math::tools::toms748_solve(
          delta, a, b, fa, fb, [](double u, double v) { return std::abs(u - v) <= 1e-14 * (1 + std::abs(u)); },
          iters);
      roots.push_back(0.5 * (r0 + r1));
    }
    a = b;
    fa = fb;
  }
  return roots;
}

}  // namespace

void SEParams::validate() const {
  model.validate();
  if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be positive");
  if (!(lambda > 0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be positive");
  if (!(damping >= 0 && damping < 1)) throw InvalidInput("damping must lie in [0, 1)");
  if (quadrature_order < 2) throw InvalidInput("quadrature order must be at least 2");
  if (max_iter < 1) throw InvalidInput("max_iter must be positive");
  if (!(tol > 0)) throw InvalidInput("tolerance must be positive");
}

double teacher_variance(const Overlaps& ov, const GenerativeModel& model) {
  return std::max(model.rho - ov.m * ov.m / ov.q, kMinTeacherVariance);
}

ZStar z_star(const GenerativeModel& model, int y, double omega, double variance, int order) {
  if (!(variance > 0)) throw InvalidInput("Z* needs a positive variance");
  if (y != 1 && y != -1) throw InvalidInput("Z* label must be +1 or -1");
  // u = y xi / t_star ~ N(mu, s^2)
  const double mu = y * omega / model.t_star;
  const double s = std::sqrt(variance) / model.t_star;
  const double chain = y / model.t_star;

  ZStar out;
  switch (model.target) {
    case Target::logit: {
      const auto rule = gauss_hermite(order);
      double value = 0, slope = 0;
      for (Index i = 0; i < rule->size(); ++i) {
        const double p = sigmoid(mu + s * rule->nodes[i]);
        value += rule->weights[i] * p;
        slope += rule->weights[i] * p * (1 - p);
      }
      out = {value, chain * slope};
      break;
    }
    case Target::affine: {
      const double a = (-1 - mu) / s, b = (1 - mu) / s;
      const double inside = normal_cdf(b) - normal_cdf(a);
      out.value = normal_sf(b) + 0.5 * ((mu + 1) * inside + s * (normal_pdf(a) - normal_pdf(b)));
      out.d_omega = chain * 0.5 * inside;
      break;
    }
    case Target::constant: {
      const double a = (-1 - mu) / s, b = (1 - mu) / s;
      out.value = 0.5 * (normal_sf(a) + normal_sf(b));
      out.d_omega = chain * (normal_pdf(a) + normal_pdf(b)) / (2 * s);
      break;
    }
  }
  return out;
}

double prox_logistic(int y, double omega, double v) { return logistic_channel(y, omega, v).prox; }

LogisticChannel logistic_channel(int y, double omega, double v) {
  if (!(v > 0)) throw InvalidInput("prox needs v > 0");
  if (y != 1 && y != -1) throw InvalidInput("prox label must be +1 or -1");
  if (!std::isfinite(omega)) throw InvalidInput("prox needs a finite omega");

  // With u = y z the problem is label-free: (u - w)/v = sigmoid(-u), w = y omega.
  // The root lies in [w, w + v] since sigmoid(-u) is in (0, 1).
  const double w = y * omega;
  double lo = w, hi = w + v;
  double u = w + v * sigmoid(-w);
  u = std::clamp(u, lo, hi);
  bool done = false;
  double last_r = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200 && !done; ++it) {
    const double r = (u - w) / v - sigmoid(-u);
    if (r == 0) break;
    (r > 0 ? hi : lo) = u;
    const double curvature = sigmoid(u) * sigmoid(-u);
    double next = u - r / (1 / v + curvature);
    // Bisect when Newton leaves the bracket or stops halving the residual.
    if (!(next > lo && next < hi) || std::abs(r) > 0.5 * last_r) next = 0.5 * (lo + hi);
    last_r = std::abs(r);
    done = std::abs(next - u) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u)) ||
           hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u));
    u = next;
  }
  const double stationarity = std::abs((u - w) / v - sigmoid(-u)) * std::min(1.0, v);
  if (!(stationarity <= 1e-12))
    throw SolverError("logistic prox failed to converge (omega = " + std::to_string(omega) +
                      ", v = " + std::to_string(v) + ")");

  const double curvature = sigmoid(u) * sigmoid(-u);
  LogisticChannel out;
  out.prox = y * u;
  out.f_out = y * sigmoid(-u);
  out.d_omega_f_out = -curvature / (1 + v * curvature);
  return out;
}

Overlaps se_update(const Overlaps& current, const SEParams& params) {
  check_converged_shape(current);
  const auto& model = params.model;
  const double raw_variance = model.rho - current.m * current.m / current.q;
  const double teacher_var = teacher_variance(current, model);
  const double ratio = current.m / current.q;

  // The summed-over-y integrands are even in xi, so the expectation over
  // N(0, q) is twice the half-line integral.
  const auto grid = half_line(current.q, params.quadrature_order);
  double m_hat = 0, q_hat = 0, v_hat = 0;
  for (std::size_t i = 0; i < grid.xi.size(); ++i) {
    const double xi = grid.xi[i];
    double dm = 0, dq = 0, dv = 0;
    for (int y : {-1, 1}) {
      const auto ch = logistic_channel(y, xi, current.v);
      const auto zs = z_star(model, y, ratio * xi, teacher_var, params.quadrature_order);
      dm += zs.d_omega * ch.f_out;
      dq += zs.value * ch.f_out * ch.f_out;
      dv -= zs.value * ch.d_omega_f_out;
    }
    m_hat += grid.weight[i] * dm;
    q_hat += grid.weight[i] * dq;
    v_hat += grid.weight[i] * dv;
  }
  m_hat *= 2 * params.alpha;
  q_hat *= 2 * params.alpha;
  v_hat *= 2 * params.alpha;

  const double denom = params.lambda + v_hat;
  const double g = params.damping;
  Overlaps next;
  next.m_hat = m_hat;
  next.q_hat = q_hat;
  next.v_hat = v_hat;
  next.m = (1 - g) * (m_hat / denom) + g * current.m;
  next.q = (1 - g) * ((q_hat + m_hat * m_hat) / (denom * denom)) + g * current.q;
  next.v = (1 - g) * (1 / denom) + g * current.v;
  next.q = std::max(next.q, std::numeric_limits<double>::min());
  next.variance_clamped = current.variance_clamped || raw_variance < kMinTeacherVariance;
  next.iterations = current.iterations + 1;

  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-300); };
  next.residual = std::max({rel(next.m, current.m), rel(next.q, current.q), rel(next.v, current.v)});
  return next;
}

Overlaps se_fixed_point(const SEParams& params, const std::optional<Overlaps>& init) {
  params.validate();
  Overlaps state = init.value_or(Overlaps{});
  state.iterations = 0;
  state.converged = false;
  state.variance_clamped = false;
  for (int it = 0; it < params.max_iter; ++it) {
    state = se_update(state, params);
    if (!std::isfinite(state.m) || !std::isfinite(state.q) || !std::isfinite(state.v))
      throw SolverError("state evolution produced non-finite overlaps");
    if (state.residual <= params.tol) {
      state.converged = true;
      break;
    }
  }
  return state;
}

double asymptotic_calibration(const Overlaps& ov, const GenerativeModel& model, double temperature, double ell,
                              int order) {
  check_converged_shape(ov);
  check_temperature(temperature);
  if (!(ell > 0 && ell < 1)) throw InvalidInput("confidence must lie strictly inside (0, 1)");
  return ell - z_plus(ov, model, temperature * logit(ell), order);
}

double asymptotic_ece(const Overlaps& ov, const GenerativeModel& model, double temperature, EceIntegral integral,
                      int order) {
  check_converged_shape(ov);
  check_temperature(temperature);
  const auto pop = population(ov, model, order, calibration_roots(ov, model, temperature, order));
  const double full = symmetric_expectation(
      pop, [temperature](double xi, double zp) { return std::abs(sigmoid(xi / temperature) - zp); });
  return integral == EceIntegral::full_line ? full : 0.5 * full;
}

double asymptotic_error(const Overlaps& ov, const GenerativeModel& model, int order) {
  return error_on(population(ov, model, order));
}

double asymptotic_loss(const Overlaps& ov, const GenerativeModel& model, double temperature, int order) {
  check_temperature(temperature);
  return loss_on(population(ov, model, order), temperature);
}

double asymptotic_mean_confidence(const Overlaps& ov, double temperature, int order) {
  check_converged_shape(ov);
  check_temperature(temperature);
  Population pop{half_line(ov.q, order), {}};
  pop.z_plus.assign(pop.grid.xi.size(), 0.0);
  return mean_confidence_on(pop, temperature);
}

double asymptotic_brier(const Overlaps& ov, const GenerativeModel& model, double temperature, int order) {
  check_temperature(temperature);
  const auto pop = population(ov, model, order);
  return 2 * symmetric_expectation(pop, [temperature](double xi, double zp) {
           const double p = sigmoid(xi / temperature);
           return zp * (p - 1) * (p - 1) + (1 - zp) * p * p;
         });
}

AsymptoticFit fit_ts_asymptotic(const Overlaps& ov, const GenerativeModel& model, int order) {
  const auto pop = population(ov, model, order);
  auto loss = [&](double log_t) { return loss_on(pop, std::exp(log_t)); };
  auto slope = [&](double log_t) { return loss_slope_on(pop, std::exp(log_t)); };

  constexpr int kGrid = 64;
  const double step = (kLogTMax - kLogTMin) / (kGrid - 1);
  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int g = 0; g < kGrid; ++g) {
    const double v = loss(kLogTMin + step * g);
    if (v < best_value) best_value = v, best = g;
  }
  const double a = kLogTMin + step * std::max(best - 1, 0);
  const double b = kLogTMin + step * std::min(best + 1, kGrid - 1);

  std::uintmax_t iters = 200;
  double x = boost::math::tools::brent_find_minima(loss, a, b, std::numeric_limits<double>::digits / 2, iters).first;
  const double sa = slope(a), sb = slope(b);
  if (sa < 0 && sb > 0) {
    std::uintmax_t root_iters = 200;
    auto [r0, r1] = boost::math::tools::toms748_solve(
        slope, a, b, sa, sb, [](double u, double v) { return std::abs(u - v) <= 1e-14; }, root_iters);
    x = 0.5 * (r0 + r1);
  }

  AsymptoticFit fit;
  if (best == 0 && slope(kLogTMin) >= 0) {
    x = kLogTMin;
    fit.clamped = true;
  } else if (best == kGrid - 1 && slope(kLogTMax) <= 0) {
    x = kLogTMax;
    fit.clamped = true;
  }
  fit.temperature = std::exp(x);
  fit.residual = slope(x);
  return fit;
}

AsymptoticFit fit_ec_asymptotic(const Overlaps& ov, const GenerativeModel& model, int order) {
  const auto pop = population(ov, model, order);
  const double target = 1 - error_on(pop);
  auto gap = [&](double log_t) { return mean_confidence_on(pop, std::exp(log_t)) - target; };

  double lo = kLogTMin, hi = kLogTMax;
  const double g_lo = gap(lo), g_hi = gap(hi);
  if (!(g_lo > 0 && g_hi < 0))
    throw UnsatisfiableTarget("EC root outside [1e-4, 1e4]: accuracy " + std::to_string(target) +
                              ", confidence range [" + std::to_string(target + g_hi) + ", " +
                              std::to_string(target + g_lo) + "]");
  double mid = 0.5 * (lo + hi), g = gap(mid);
  for (int it = 0; it < 200 && std::abs(g) > 1e-13 && hi - lo > 1e-15; ++it) {
    (g > 0 ? lo : hi) = mid;
    mid = 0.5 * (lo + hi);
    g = gap(mid);
  }
  return {std::exp(mid), g, false};
}

LambdaFit optimize_lambda(double alpha, const GenerativeModel& model, LambdaObjective objective,
                          const SEParams& base) {
  SEParams params = base;
  params.alpha = alpha;
  params.model = model;
  params.validate();

  std::optional<Overlaps> warm;
  auto solve = [&](double log_lambda) {
    params.lambda = std::exp(log_lambda);
    auto ov = se_fixed_point(params, warm);
    if (!ov.converged) ov = se_fixed_point(params);
    warm = ov;
    return ov;
  };
  auto score = [&](const Overlaps& ov) {
    return objective == LambdaObjective::error ? asymptotic_error(ov, model, params.quadrature_order)
                                               : asymptotic_loss(ov, model, 1.0, params.quadrature_order);
  };

  constexpr int kGrid = 16;
  const double lo = std::log(1e-6), hi = std::log(1e3);
  const double step = (hi - lo) / (kGrid - 1);
  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  // Descending lambda: strong regularisation converges fastest and seeds the rest.
  for (int g = kGrid - 1; g >= 0; --g) {
    const double v = score(solve(lo + step * g));
    if (v < best_value) best_value = v, best = g;
  }

  const double a = lo + step * std::max(best - 1, 0);
  const double b = lo + step * std::min(best + 1, kGrid - 1);
  warm = solve(lo + step * best);
  std::uintmax_t iters = 100;
  auto [x, fx] = boost::math::tools::brent_find_minima([&](double l) { return score(solve(l)); }, a, b, 20, iters);

  LambdaFit out;
  out.lambda = std::exp(x);
  out.objective = fx;
  out.overlaps = solve(x);
  out.clamped = (best == 0 && x - lo < 1e-3) || (best == kGrid - 1 && hi - x < 1e-3);
  return out;
}

AsymptoticReport asymptotic_report(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                   int curve_points, int order) {
  AsymptoticReport out;
  out.temperature = temperature;
  out.error = asymptotic_error(ov, model, order);
  out.loss = asymptotic_loss(ov, model, temperature, order);
  out.ece = asymptotic_ece(ov, model, temperature, EceIntegral::full_line, order);
  out.brier = asymptotic_brier(ov, model, temperature, order);
  for (int k = 0; k < curve_points; ++k) {
    const double ell = (k + 1.0) / (curve_points + 1.0);
    out.calibration_curve.emplace_back(ell, asymptotic_calibration(ov, model, temperature, ell, order));
  }
  return out;
}

JointDensity joint_density_grid(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                int resolution, int order) {
  check_converged_shape(ov);
  check_temperature(temperature);
  if (resolution < 1) throw InvalidInput("grid resolution must be at least 1");

  const double sq = std::sqrt(ov.q);
  const double ratio = ov.m / ov.q;
  const double sd = std::sqrt(teacher_variance(ov, model));
  const double inf = std::numeric_limits<double>::infinity();
  const double reach = 12 * sq;
  const auto edges = Eigen::VectorXd::LinSpaced(resolution + 1, 0.0, 1.0);

  // Teacher pre-activation u = eta / t_star with target(u) < t  <=>  u < threshold(t)
  // (non-strict for the constant target's upper step).
  auto threshold = [&](double t) -> double {
    if (t <= 0) return -inf;
    if (t > 1) return inf;
    switch (model.target) {
      case Target::logit: return t >= 1 ? inf : logit(t);
      case Target::affine: return 2 * t - 1;
      case Target::constant: return t <= 0.5 ? -1.0 : 1.0;
    }
    return inf;
  };
  std::vector<double> cut(static_cast<std::size_t>(resolution + 1));
  for (int j = 0; j <= resolution; ++j) cut[static_cast<std::size_t>(j)] = model.t_star * threshold(edges[j]);
  cut.back() = inf;

  auto below = [&](double c, double xi) {
    if (c == -inf) return 0.0;
    if (c == inf) return 1.0;
    return normal_cdf((c - ratio * xi) / sd);
  };

  const auto rule = gauss_legendre(std::max(16, order / 4));
  JointDensity out{Eigen::MatrixXd::Zero(resolution, resolution), resolution};
  for (int i = 0; i < resolution; ++i) {
    const double a = i == 0 ? -reach : std::max(-reach, temperature * logit(edges[i]));
    const double b = i == resolution - 1 ? reach : std::min(reach, temperature * logit(edges[i + 1]));
    if (!(b > a)) continue;
    const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / sq)));
    for (int p = 0; p < panels; ++p) {
      const double pa = a + (b - a) * p / panels, pb = a + (b - a) * (p + 1) / panels;
      const double half = 0.5 * (pb - pa), mid = 0.5 * (pa + pb);
      for (Index k = 0; k < rule->size(); ++k) {
        const double xi = mid + half * rule->nodes[k];
        const double w = half * rule->weights[k] * normal_pdf(xi / sq) / sq;
        double prev = 0;
        for (int j = 0; j < resolution; ++j) {
          const double next = below(cut[static_cast<std::size_t>(j + 1)], xi);
          out.mass(i, j) += w * (next - prev);
          prev = next;
        }
      }
    }
  }
  return out;
}

Eigen::VectorXd conditional_mean_curve(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                       const Eigen::VectorXd& ell, int order) {
  check_converged_shape(ov);
  check_temperature(temperature);
  Eigen::VectorXd out(ell.size());
  for (Index k = 0; k < ell.size(); ++k) {
    if (!(ell[k] > 0 && ell[k] < 1)) throw InvalidInput("confidence must lie strictly inside (0, 1)");
    out[k] = z_plus(ov, model, temperature * logit(ell[k]), order);
  }
  return out;
}

}  // namespace ecal
