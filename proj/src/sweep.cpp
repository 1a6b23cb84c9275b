#include "ecal/sweep.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "ecal/dataio.hpp"
#include "ecal/error.hpp"
#include "ecal/parallel.hpp"

namespace ecal {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_number(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double x = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size() || !std::isfinite(x))
    throw InvalidInput("'" + std::string(text) + "' is not a finite number");
  return x;
}

void append(std::string& note, const std::string& what) {
  if (!note.empty()) note += "; ";
  note += what;
}

}  // namespace

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

LambdaChoice parse_lambda(std::string_view text) {
  if (text == "error") return LambdaObjective::error;
  if (text == "loss") return LambdaObjective::loss;
  const double lambda = parse_number(text);
  if (!(lambda > 0)) throw InvalidInput("lambda must be positive");
  return lambda;
}

std::string to_string(const LambdaChoice& choice) {
  if (const auto* fixed = std::get_if<double>(&choice)) return format_double(*fixed);
  return std::get<LambdaObjective>(choice) == LambdaObjective::error ? "error" : "loss";
}

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<std::string_view> parts;
    for (std::size_t pos; (pos = text.find(':')) != std::string_view::npos; text.remove_prefix(pos + 1))
      parts.push_back(text.substr(0, pos));
    parts.push_back(text);
    if (parts.size() != 3) throw InvalidInput("range grid must be start:stop:count");
    const double start = parse_number(parts[0]), stop = parse_number(parts[1]);
    const double count = parse_number(parts[2]);
    if (count < 1 || count != std::floor(count)) throw InvalidInput("grid count must be a positive integer");
    const auto n = static_cast<int>(count);
    if (n == 1 && start != stop) throw InvalidInput("a one-point range needs start == stop");
    for (int k = 0; k < n; ++k) out.push_back(n == 1 ? start : start + (stop - start) * k / (n - 1));
  } else {
    for (std::size_t pos;; text.remove_prefix(pos + 1)) {
      pos = text.find(',');
      out.push_back(parse_number(text.substr(0, pos)));
      if (pos == std::string_view::npos) break;
    }
  }
  return out;
}

SweepRow evaluate_point(const SweepPoint& point, const SEParams& base) {
  SEParams params = base;
  params.alpha = point.alpha;
  params.model.target = point.target;

  SweepRow row;
  row.alpha = point.alpha;
  row.target = point.target;

  Overlaps ov;
  if (const auto* fixed = std::get_if<double>(&point.lambda)) {
    params.lambda = *fixed;
    params.validate();
    ov = se_fixed_point(params);
  } else {
    auto fit = optimize_lambda(point.alpha, params.model, std::get<LambdaObjective>(point.lambda), params);
    params.lambda = fit.lambda;
    ov = fit.overlaps;
    if (fit.clamped) append(row.note, "optimal lambda at search boundary");
  }
  row.lambda = params.lambda;
  row.m = ov.m;
  row.q = ov.q;
  row.v = ov.v;
  row.converged = ov.converged;
  if (!ov.converged) append(row.note, "fixed point not converged");
  if (ov.variance_clamped) append(row.note, "teacher variance clamped");

  const auto& model = params.model;
  const int order = params.quadrature_order;
  row.error = asymptotic_error(ov, model, order);
  row.ece_raw = asymptotic_ece(ov, model, 1.0, EceIntegral::full_line, order);
  row.brier_raw = asymptotic_brier(ov, model, 1.0, order);

  const auto ts = fit_ts_asymptotic(ov, model, order);
  row.t_ts = ts.temperature;
  if (ts.clamped) append(row.note, "T_TS clamped");
  row.ece_ts = asymptotic_ece(ov, model, row.t_ts, EceIntegral::full_line, order);
  row.brier_ts = asymptotic_brier(ov, model, row.t_ts, order);

  try {
    row.t_ec = fit_ec_asymptotic(ov, model, order).temperature;
    row.ece_ec = asymptotic_ece(ov, model, row.t_ec, EceIntegral::full_line, order);
    row.brier_ec = asymptotic_brier(ov, model, row.t_ec, order);
    row.delta_t = std::abs(row.t_ec - row.t_ts) / row.t_ts;
  } catch (const UnsatisfiableTarget& e) {
    row.t_ec = row.ece_ec = row.brier_ec = row.delta_t = kNaN;
    append(row.note, e.what());
  }
  return row;
}

std::vector<SweepRow> run_sweep(const std::vector<SweepPoint>& points, const SEParams& base, unsigned threads) {
  std::vector<SweepRow> rows(points.size());
  parallel_for(
      points.size(), [&](std::size_t i) { rows[i] = evaluate_point(points[i], base); }, threads);
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "alpha,lambda,target,m,q,v,T_TS,T_EC,ECE_raw,ECE_TS,ECE_EC,BS_raw,BS_TS,BS_EC,E_g,delta_T,converged,note\n";
  for (const auto& r : rows) {
    for (double x : {r.alpha, r.lambda}) out << format_double(x) << ',';
    out << to_string(r.target) << ',';
    for (double x : {r.m, r.q, r.v, r.t_ts, r.t_ec, r.ece_raw, r.ece_ts, r.ece_ec, r.brier_raw, r.brier_ts,
                     r.brier_ec, r.error, r.delta_t})
      out << format_double(x) << ',';
    out << (r.converged ? 1 : 0) << ',';
    out << csv_field(r.note) << '\n';
  }
}

}  // namespace ecal
