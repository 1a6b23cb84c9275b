#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "ecal/synthetic.hpp"

namespace ecal {

inline constexpr int kDefaultQuadratureOrder = 100;

/// Smallest teacher conditional variance rho - m^2/q used when an iterate
/// overshoots the Cauchy-Schwarz bound.
inline constexpr double kMinTeacherVariance = 1e-12;

struct SEParams {
  double alpha = 1;
  double lambda = 1e-4;
  GenerativeModel model;
  int quadrature_order = kDefaultQuadratureOrder;
  double damping = 0.5;
  int max_iter = 10000;
  double tol = 1e-9;

  void validate() const;
};

/// Order parameters of the ERM fixed point and their conjugates.
struct Overlaps {
  double m = 0.1, q = 0.5, v = 1.0;
  double m_hat = 0, q_hat = 0, v_hat = 0;
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool variance_clamped = false;  // rho - m^2/q was clamped at some sweep
};

/// rho - m^2/q, clamped below at kMinTeacherVariance.
double teacher_variance(const Overlaps& ov, const GenerativeModel& model);

struct ZStar {
  double value = 0;    // E_{xi ~ N(omega, V)} target(y xi / t_star)
  double d_omega = 0;  // derivative of value in omega
};

/// Gaussian-smoothed teacher link. Closed form for the affine and constant
/// targets, Gauss-Hermite of the given order for the logit target.
ZStar z_star(const GenerativeModel& model, int y, double omega, double variance,
             int order = kDefaultQuadratureOrder);

/// Output channel of the logistic loss at label y:
///   prox = argmin_z (z - omega)^2 / (2 v) + log(1 + exp(-y z))
///   f_out = (prox - omega) / v and its omega-derivative.
struct LogisticChannel {
  double prox = 0;
  double f_out = 0;
  double d_omega_f_out = 0;
};

double prox_logistic(int y, double omega, double v);
LogisticChannel logistic_channel(int y, double omega, double v);

/// One damped sweep of the self-consistent equations.
Overlaps se_update(const Overlaps& current, const SEParams& params);

/// Iterates se_update until the largest relative change of (m, q, v) is
/// below params.tol. Returns the last iterate with converged = false if the
/// budget runs out.
Overlaps se_fixed_point(const SEParams& params, const std::optional<Overlaps>& init = std::nullopt);

// Population metrics of the student sigmoid(w.x / T). All are Gaussian
// expectations over the student pre-activation xi ~ N(0, q); the teacher
// pre-activation given xi is N((m/q) xi, rho - m^2/q).

/// ell - P(y = +1 | student confidence ell), with the student read at
/// temperature T.
double asymptotic_calibration(const Overlaps& ov, const GenerativeModel& model, double temperature,
                              double ell, int order = kDefaultQuadratureOrder);

/// How the ECE integral over xi is taken. `full_line` is the expectation of
/// |calibration| over all test points; `half_line` integrates xi > 0 only,
/// which is exactly half of it.
enum class EceIntegral { full_line, half_line };

double asymptotic_ece(const Overlaps& ov, const GenerativeModel& model, double temperature,
                      EceIntegral integral = EceIntegral::full_line, int order = kDefaultQuadratureOrder);
double asymptotic_error(const Overlaps& ov, const GenerativeModel& model, int order = kDefaultQuadratureOrder);
double asymptotic_loss(const Overlaps& ov, const GenerativeModel& model, double temperature,
                       int order = kDefaultQuadratureOrder);
double asymptotic_mean_confidence(const Overlaps& ov, double temperature, int order = kDefaultQuadratureOrder);
/// Two-class Brier score (sum over both classes).
double asymptotic_brier(const Overlaps& ov, const GenerativeModel& model, double temperature,
                        int order = kDefaultQuadratureOrder);

struct AsymptoticFit {
  double temperature = 1;
  double residual = 0;
  bool clamped = false;
};

/// argmin_T asymptotic_loss on [1e-4, 1e4].
AsymptoticFit fit_ts_asymptotic(const Overlaps& ov, const GenerativeModel& model,
                                int order = kDefaultQuadratureOrder);
/// Root of asymptotic_mean_confidence(T) = 1 - asymptotic_error.
AsymptoticFit fit_ec_asymptotic(const Overlaps& ov, const GenerativeModel& model,
                                int order = kDefaultQuadratureOrder);

enum class LambdaObjective { error, loss };

struct LambdaFit {
  double lambda = 0;
  double objective = 0;
  Overlaps overlaps;
  bool clamped = false;
};

/// Minimises the asymptotic test error or test loss over log lambda on
/// [1e-6, 1e3]: 16-point grid, then Brent on the best bracket.
LambdaFit optimize_lambda(double alpha, const GenerativeModel& model, LambdaObjective objective,
                          const SEParams& base = {});

struct AsymptoticReport {
  double error = 0;
  double loss = 0;
  double ece = 0;
  double brier = 0;
  double temperature = 1;
  std::vector<std::pair<double, double>> calibration_curve;  // (ell, Delta_ell)
};

AsymptoticReport asymptotic_report(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                   int curve_points = 19, int order = kDefaultQuadratureOrder);

/// Probability mass of (student probability, teacher probability) on a
/// G x G grid over [0, 1]^2. Row index = student bin, column = teacher
/// bin. Bins are [k/G, (k+1)/G) with the last one closed; atoms of the
/// piecewise targets land in the bin that contains them.
struct JointDensity {
  Eigen::MatrixXd mass;
  int resolution = 0;

  Eigen::MatrixXd density() const { return mass * double(resolution) * double(resolution); }
};

JointDensity joint_density_grid(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                int resolution, int order = kDefaultQuadratureOrder);

/// E[teacher probability | student probability = ell] for each ell in (0, 1).
Eigen::VectorXd conditional_mean_curve(const Overlaps& ov, const GenerativeModel& model, double temperature,
                                       const Eigen::VectorXd& ell, int order = kDefaultQuadratureOrder);

}  // namespace ecal
