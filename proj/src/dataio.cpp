#include "ecal/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ecal/error.hpp"

namespace ecal {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) return out;
    line.remove_prefix(comma + 1);
  }
}

double parse_real(std::string_view field, std::size_t line) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double x = 0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc() || end != field.data() + field.size() || field.empty())
    throw ParseError(line, "'" + std::string(field) + "' is not a number");
  if (!std::isfinite(x)) throw ParseError(line, "non-finite logit '" + std::string(field) + "'");
  return x;
}

int parse_label(std::string_view field, std::size_t line, Index classes) {
  int y = 0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), y);
  if (ec != std::errc() || end != field.data() + field.size() || field.empty())
    throw ParseError(line, "label '" + std::string(field) + "' is not an integer");
  if (y < 0 || y >= classes)
    throw ParseError(line, "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  return y;
}

Index parse_header(std::string_view line) {
  const auto fields = split(line);
  if (fields.size() < 3) throw ParseError(1, "header needs at least two logit columns and a label column");
  const auto k = static_cast<Index>(fields.size() - 1);
  for (Index j = 0; j < k; ++j)
    if (fields[j] != "logit_" + std::to_string(j))
      throw ParseError(1, "expected column 'logit_" + std::to_string(j) + "', found '" + std::string(fields[j]) + "'");
  if (fields.back() != "label") throw ParseError(1, "last column must be 'label'");
  return k;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

Json optional_array(const std::vector<std::optional<double>>& values) {
  Json out = Json::array();
  for (const auto& v : values) out.push_back(v ? Json(*v) : Json(nullptr));
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, end);
}

LabeledLogits read_logits_csv(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  if (!std::getline(in, text)) throw ParseError(1, "empty file");
  ++line_no;
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
  const Index k = parse_header(trim(text));

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, text)) {
    ++line_no;
    const auto line = trim(text);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (static_cast<Index>(fields.size()) != k + 1)
      throw ParseError(line_no, "expected " + std::to_string(k + 1) + " fields, found " +
                                    std::to_string(fields.size()));
    for (Index j = 0; j < k; ++j) values.push_back(parse_real(fields[j], line_no));
    labels.push_back(parse_label(fields.back(), line_no, k));
  }
  if (labels.empty()) throw ParseError(line_no, "no data rows");

  const auto n = static_cast<Index>(labels.size());
  LogitMatrix<double> logits = Eigen::Map<const LogitMatrix<double>>(values.data(), n, k);
  LabelVector y = Eigen::Map<const LabelVector>(labels.data(), n);
  return LabeledLogits(std::move(logits), std::move(y));
}

LabeledLogits read_logits_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  return read_logits_csv(in);
}

void write_logits_csv(std::ostream& out, const LabeledLogits& data) {
  for (Index j = 0; j < data.classes(); ++j) out << "logit_" << j << ',';
  out << "label\n";
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.classes(); ++j) out << format_double(data.logits()(i, j)) << ',';
    out << data.label(i) << '\n';
  }
}

void write_logits_csv(const std::filesystem::path& path, const LabeledLogits& data) {
  auto out = open_for_write(path);
  write_logits_csv(out, data);
  if (!out.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Json to_json(const ReliabilityBins& bins) {
  Json out;
  out["edges"] = std::vector<double>(bins.edges.data(), bins.edges.data() + bins.edges.size());
  out["count"] = bins.count;
  out["confidence"] = optional_array(bins.confidence);
  out["accuracy"] = optional_array(bins.accuracy);
  std::vector<std::optional<double>> gaps;
  for (Index b = 0; b < bins.size(); ++b) gaps.push_back(bins.gap(b));
  out["gap"] = optional_array(gaps);
  return out;
}

Json to_json(const MetricsReport& report) {
  Json out;
  out["temperature"] = report.temperature;
  out["accuracy"] = report.accuracy;
  out["ece"] = report.ece;
  out["brier"] = report.brier;
  out["bins"] = to_json(report.bins);
  return out;
}

Json to_json(const TemperatureFit& fit) {
  Json out;
  out["method"] = std::string(to_string(fit.method));
  out["temperature"] = fit.temperature;
  out["residual"] = fit.residual;
  out["iterations"] = fit.iterations;
  out["clamped"] = fit.clamped;
  out["top_n"] = fit.method == FitMethod::ec_topn ? Json(fit.top_n) : Json(nullptr);
  return out;
}

Json to_json(const AsymptoticReport& report) {
  Json out;
  out["temperature"] = report.temperature;
  out["error"] = report.error;
  out["loss"] = report.loss;
  out["ece"] = report.ece;
  out["brier"] = report.brier;
  Json curve = Json::array();
  for (const auto& [ell, delta] : report.calibration_curve) curve.push_back(Json{{"ell", ell}, {"delta", delta}});
  out["calibration_curve"] = std::move(curve);
  return out;
}

Json calibration_report(const MetricsReport& before, const MetricsReport& after, const TemperatureFit& fit) {
  Json out;
  out["schema"] = kCalibrationSchema;
  out["fit"] = to_json(fit);
  out["before"] = to_json(before);
  out["after"] = to_json(after);
  return out;
}

void write_json(const Json& doc, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << doc.dump(2) << '\n';
  if (!out.flush()) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
  Json doc;
  doc["schema"] = kMetricsSchema;
  const Json body = to_json(report);
  for (const auto& [key, value] : body.items()) doc[key] = value;
  write_json(doc, path);
}

void write_report_json(const AsymptoticReport& report, const std::filesystem::path& path) {
  Json doc;
  doc["schema"] = kAsymptoticSchema;
  const Json body = to_json(report);
  for (const auto& [key, value] : body.items()) doc[key] = value;
  write_json(doc, path);
}

}  // namespace ecal
