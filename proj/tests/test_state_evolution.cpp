#include "doctest.h"

#include <cmath>
#include <random>

#include "ecal/error.hpp"
#include "ecal/state_evolution.hpp"
#include "support.hpp"

using namespace ecal;

namespace {

const GenerativeModel kLogit{Target::logit}, kAffine{Target::affine}, kConstant{Target::constant};

// Plain bisection on z - omega = v sigma(-z) over [omega, omega + v].
double bisect_prox(double omega, double v) {
  double lo = omega, hi = omega + v;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid - omega - v * ecal::test::sigmoid(-mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double mc_z_star(const GenerativeModel& model, int y, double omega, double var, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(omega, std::sqrt(var));
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += target_activation(model, y * normal(rng) / model.t_star);
  return sum / n;
}

Overlaps solve(const GenerativeModel& model, double alpha, double lambda = 1e-4, int order = kDefaultQuadratureOrder) {
  SEParams p;
  p.alpha = alpha;
  p.lambda = lambda;
  p.model = model;
  p.quadrature_order = order;
  p.tol = 1e-12;
  p.max_iter = 100000;
  return se_fixed_point(p);
}

}  // namespace

TEST_CASE("Z* at the symmetric point") {
  for (const auto& m : {kLogit, kAffine, kConstant})
    for (double v : {0.01, 1.0, 25.0}) CHECK(z_star(m, 1, 0.0, v).value == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(z_star(kConstant, 1, 2.0, 1e-12).value == doctest::Approx(1.0));
  CHECK_THROWS_AS(z_star(kLogit, 1, 0.0, 0.0), InvalidInput);
}

TEST_CASE("Z* against Monte Carlo") {
  const int n = 4000000;
  for (const auto& base : {kLogit, kAffine, kConstant})
    for (double t_star : {1.0, 1.7})
      for (auto [omega, var] : {std::pair{1.0, 1.0}, {-0.4, 2.5}, {2.2, 0.3}}) {
        GenerativeModel m = base;
        m.t_star = t_star;
        for (int y : {-1, 1}) {
          const double mc = mc_z_star(m, y, omega, var, n, 17);
          CHECK(std::abs(z_star(m, y, omega, var).value - mc) <= 1e-3);
        }
      }
}

TEST_CASE("Z* derivative in omega") {
  for (const auto& m : {kLogit, kAffine, kConstant})
    for (int y : {-1, 1})
      for (double omega : {-1.3, 0.2, 0.9}) {
        const double h = 1e-5, var = 0.8;
        const double fd = (z_star(m, y, omega + h, var).value - z_star(m, y, omega - h, var).value) / (2 * h);
        CHECK(z_star(m, y, omega, var).d_omega == doctest::Approx(fd).epsilon(1e-6));
      }
}

TEST_CASE("logistic prox") {
  CHECK(prox_logistic(1, 0.0, 1.0) == doctest::Approx(bisect_prox(0.0, 1.0)).epsilon(1e-12));
  CHECK(prox_logistic(1, 0.0, 1.0) == doctest::Approx(0.4011).epsilon(1e-4));
  CHECK(prox_logistic(1, 0.7, 1e-9) == doctest::Approx(0.7).epsilon(1e-8));

  for (double omega : {-30.0, -5.81, -1.0, 0.0, 2.0, 40.0})
    for (double v : {1e-3, 0.5, 11.5, 3600.0}) {
      CHECK(prox_logistic(-1, omega, v) == doctest::Approx(-prox_logistic(1, -omega, v)).epsilon(1e-12));
      CHECK(prox_logistic(1, omega, v) == doctest::Approx(bisect_prox(omega, v)).epsilon(1e-10));
      const auto ch = logistic_channel(1, omega, v);
      const double h = 1e-6 * std::max(1.0, std::abs(omega));
      const double fd = (logistic_channel(1, omega + h, v).f_out - logistic_channel(1, omega - h, v).f_out) / (2 * h);
      CHECK(std::abs(ch.d_omega_f_out - fd) <= 1e-5 * std::abs(fd) + 1e-9);
      CHECK(ch.f_out == doctest::Approx((ch.prox - omega) / v));
    }
}

TEST_CASE("fixed point limits") {
  SUBCASE("prior dominates") {
    const double lambda = 1e6;
    auto ov = solve(kLogit, 2, lambda);
    CHECK(std::abs(ov.m) < 1e-5);
    CHECK(ov.q < 1e-10);
    CHECK(ov.v == doctest::Approx(1 / lambda).epsilon(1e-4));
  }
  SUBCASE("no data") {
    auto ov = solve(kLogit, 1e-4, 1.0);
    CHECK(std::abs(ov.m) < 1e-3);
  }
}

TEST_CASE("fixed point is stationary and unique") {
  SEParams p;
  p.alpha = 5;
  p.model = kAffine;
  auto ov = se_fixed_point(p);
  REQUIRE(ov.converged);
  auto again = se_update(ov, p);
  CHECK(std::abs(again.m - ov.m) <= 10 * p.tol * std::max(1.0, ov.m));
  CHECK(std::abs(again.q - ov.q) <= 10 * p.tol * std::max(1.0, ov.q));
  CHECK(std::abs(again.v - ov.v) <= 10 * p.tol * std::max(1.0, ov.v));

  Overlaps other;
  other.m = 2;
  other.q = 9;
  other.v = 0.05;
  auto from_other = se_fixed_point(p, other);
  REQUIRE(from_other.converged);
  CHECK(std::abs(from_other.m - ov.m) <= 10 * p.tol * ov.m);
  CHECK(std::abs(from_other.q - ov.q) <= 10 * p.tol * ov.q);
}

TEST_CASE("quadrature refinement") {
  for (const auto& m : {kLogit, kAffine, kConstant}) {
    const auto lo = solve(m, 2, 1e-4, 100), hi = solve(m, 2, 1e-4, 200);
    INFO("target " << to_string(m.target));
    CHECK(std::abs(lo.m - hi.m) <= 1e-8 * std::max(1.0, hi.m));
    CHECK(std::abs(lo.q - hi.q) <= 1e-8 * std::max(1.0, hi.q));
    const double t = 1.3;
    CHECK(std::abs(asymptotic_error(lo, m, 100) - asymptotic_error(lo, m, 200)) < 1e-7);
    CHECK(std::abs(asymptotic_ece(lo, m, t, EceIntegral::full_line, 100) -
                   asymptotic_ece(lo, m, t, EceIntegral::full_line, 200)) < 1e-7);
    CHECK(std::abs(asymptotic_loss(lo, m, t, 100) - asymptotic_loss(lo, m, t, 200)) < 1e-7);
    CHECK(std::abs(asymptotic_brier(lo, m, t, 100) - asymptotic_brier(lo, m, t, 200)) < 1e-7);
  }
}

TEST_CASE("calibration curve") {
  auto ov = solve(kAffine, 5);
  for (double t : {0.7, 1.0, 1.6}) {
    CHECK(std::abs(asymptotic_calibration(ov, kAffine, t, 0.5)) < 1e-12);
    for (double ell : {0.05, 0.3, 0.61, 0.93})
      CHECK(asymptotic_calibration(ov, kAffine, t, 1 - ell) ==
            doctest::Approx(-asymptotic_calibration(ov, kAffine, t, ell)).epsilon(1e-10).scale(1e-12));
  }
  CHECK_THROWS_AS(asymptotic_calibration(ov, kAffine, 1, 0.0), InvalidInput);
  CHECK_THROWS_AS(asymptotic_calibration(ov, kAffine, 1, 1.0), InvalidInput);
}

TEST_CASE("Bayes-aligned student is calibrated") {
  Overlaps ov;
  ov.m = ov.q = 1;
  CHECK(teacher_variance(ov, kLogit) == kMinTeacherVariance);
  for (double ell : {0.1, 0.4, 0.8}) CHECK(std::abs(asymptotic_calibration(ov, kLogit, 1, ell)) < 1e-5);
  CHECK(asymptotic_ece(ov, kLogit, 1.0) < 1e-5);
  auto ts = fit_ts_asymptotic(ov, kLogit), ec = fit_ec_asymptotic(ov, kLogit);
  CHECK(ts.temperature == doctest::Approx(1).epsilon(1e-4));
  CHECK(ec.temperature == doctest::Approx(1).epsilon(1e-4));
}

TEST_CASE("population metrics") {
  Overlaps orthogonal;
  orthogonal.m = 0;
  orthogonal.q = 2;
  CHECK(asymptotic_error(orthogonal, kLogit) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(asymptotic_mean_confidence(orthogonal, 1e4) == doctest::Approx(0.5).epsilon(1e-4));

  auto ov = solve(kAffine, 20);
  CHECK(asymptotic_ece(ov, kAffine, 1.3, EceIntegral::half_line) ==
        doctest::Approx(0.5 * asymptotic_ece(ov, kAffine, 1.3)).epsilon(1e-14));

  const auto ec = fit_ec_asymptotic(ov, kAffine);
  CHECK(std::abs(asymptotic_mean_confidence(ov, ec.temperature) - (1 - asymptotic_error(ov, kAffine))) <= 1e-9);

  const auto ts = fit_ts_asymptotic(ov, kAffine);
  const double h = 1e-5, t = ts.temperature;
  const double slope = (asymptotic_loss(ov, kAffine, t * std::exp(h)) - asymptotic_loss(ov, kAffine, t * std::exp(-h))) / (2 * h);
  CHECK(std::abs(slope) < 1e-7);

  auto report = asymptotic_report(ov, kAffine, ts.temperature, 9);
  CHECK(report.calibration_curve.size() == 9);
  CHECK(report.calibration_curve[4].first == doctest::Approx(0.5));
  CHECK(std::abs(report.calibration_curve[4].second) < 1e-12);
}

TEST_CASE("asymptotic error against finite-size Monte Carlo") {
  auto ov = solve(kLogit, 3);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const double sd = std::sqrt(teacher_variance(ov, kLogit));
  const int n = 2000000;
  int wrong = 0;
  for (int i = 0; i < n; ++i) {
    const double xi = std::sqrt(ov.q) * normal(rng);
    const double eta = ov.m / ov.q * xi + sd * normal(rng);
    const int y = std::uniform_real_distribution<double>()(rng) < ecal::test::sigmoid(eta) ? 1 : -1;
    wrong += (xi > 0 ? 1 : -1) != y;
  }
  CHECK(std::abs(wrong / double(n) - asymptotic_error(ov, kLogit)) < 4 * std::sqrt(0.25 / n));
}

TEST_CASE("misspecification widens the temperature gap") {
  auto gap = [](const GenerativeModel& m) {
    auto ov = solve(m, 20);
    const double ts = fit_ts_asymptotic(ov, m).temperature, ec = fit_ec_asymptotic(ov, m).temperature;
    return std::abs(ec - ts) / ts;
  };
  CHECK(gap(kConstant) > gap(kLogit));
}

TEST_CASE("joint density") {
  auto ov = solve(kAffine, 20);
  const double t = 1.24;
  auto dens = joint_density_grid(ov, kAffine, t, 20);
  CHECK(dens.mass.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(dens.density().sum() / 400.0 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((dens.mass.array() >= -1e-15).all());

  Eigen::VectorXd ell(3);
  ell << 0.5, 0.2, 0.8;
  auto curve = conditional_mean_curve(ov, kAffine, t, ell);
  CHECK(curve[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(curve[1] == doctest::Approx(1 - curve[2]).epsilon(1e-10));

  // Histogram of 10^7 draws of (student, teacher) probabilities.
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  const double sd = std::sqrt(teacher_variance(ov, kAffine));
  const int n = 10000000, g = 20;
  Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(g, g);
  auto bin = [g](double p) { return std::min(g - 1, static_cast<int>(std::floor(p * g))); };
  for (int i = 0; i < n; ++i) {
    const double xi = std::sqrt(ov.q) * normal(rng);
    const double eta = ov.m / ov.q * xi + sd * normal(rng);
    hist(bin(ecal::test::sigmoid(xi / t)), bin(target_activation(kAffine, eta))) += 1.0 / n;
  }
  const double tv = 0.5 * (hist - dens.mass).cwiseAbs().sum();
  CHECK(tv <= 0.01);
  CHECK_THROWS_AS(joint_density_grid(ov, kAffine, t, 0), InvalidInput);
}

TEST_CASE("optimal lambda") {
  auto fit = optimize_lambda(2, kLogit, LambdaObjective::error);
  CHECK(fit.lambda > 1e-6);
  CHECK(fit.lambda < 1e3);
  const double at_opt = asymptotic_error(fit.overlaps, kLogit);
  CHECK(at_opt == doctest::Approx(fit.objective));
  CHECK(at_opt <= asymptotic_error(solve(kLogit, 2, 1e-4), kLogit) + 1e-9);
  CHECK(at_opt <= asymptotic_error(solve(kLogit, 2, fit.lambda * 3), kLogit) + 1e-9);
  CHECK(at_opt <= asymptotic_error(solve(kLogit, 2, fit.lambda / 3), kLogit) + 1e-9);
}

TEST_CASE("parameter validation") {
  SEParams p;
  p.alpha = -1;
  CHECK_THROWS_AS(se_fixed_point(p), InvalidInput);
  p.alpha = 1;
  p.lambda = 0;
  CHECK_THROWS_AS(se_fixed_point(p), InvalidInput);
  p.lambda = 1;
  p.damping = 1;
  CHECK_THROWS_AS(se_fixed_point(p), InvalidInput);
}
