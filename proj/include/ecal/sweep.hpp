#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ecal/state_evolution.hpp"

namespace ecal {

/// Either a fixed ridge strength or the asymptotically optimal one for a
/// criterion.
using LambdaChoice = std::variant<double, LambdaObjective>;

/// "error", "loss" or a positive number.
LambdaChoice parse_lambda(std::string_view text);
std::string to_string(const LambdaChoice& choice);

/// Comma list ("1,2,5") or inclusive linear range "start:stop:count".
std::vector<double> parse_grid(std::string_view text);

struct SweepPoint {
  double alpha = 1;
  LambdaChoice lambda = 1e-4;
  Target target = Target::logit;
};

/// One line of the sweep export. Quantities that could not be computed are
/// NaN and `note` says why; the row is still emitted.
struct SweepRow {
  double alpha = 0;
  double lambda = 0;
  Target target = Target::logit;
  double m = 0, q = 0, v = 0;
  double t_ts = 0, t_ec = 0;
  double ece_raw = 0, ece_ts = 0, ece_ec = 0;
  double brier_raw = 0, brier_ts = 0, brier_ec = 0;
  double error = 0;
  double delta_t = 0;  // |T_EC - T_TS| / T_TS
  bool converged = false;
  std::string note;
};

/// Fixed point plus both asymptotic temperature fits and the metrics at
/// T = 1, T_TS and T_EC. `base` supplies everything except alpha, lambda
/// and the target.
SweepRow evaluate_point(const SweepPoint& point, const SEParams& base = {});

/// Evaluates every point; rows come back in input order.
std::vector<SweepRow> run_sweep(const std::vector<SweepPoint>& points, const SEParams& base = {},
                                unsigned threads = 0);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace ecal
