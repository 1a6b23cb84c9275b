#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

#include "ecal/calibrate.hpp"
#include "ecal/labeled_logits.hpp"
#include "ecal/metrics.hpp"
#include "ecal/state_evolution.hpp"

namespace ecal {

inline constexpr const char* kCalibrationSchema = "ecal.calibration_report/1";
inline constexpr const char* kMetricsSchema = "ecal.metrics_report/1";
inline constexpr const char* kAsymptoticSchema = "ecal.asymptotic_report/1";

/// Logits CSV: header `logit_0,...,logit_{K-1},label`, one row per sample,
/// 0-based integer label. Throws ParseError (with the line number) on any
/// malformed line; nothing is returned in that case.
LabeledLogits read_logits_csv(std::istream& in);
LabeledLogits read_logits_csv(const std::filesystem::path& path);

/// Writes with 17 significant digits so every double reads back exactly.
void write_logits_csv(std::ostream& out, const LabeledLogits& data);
void write_logits_csv(const std::filesystem::path& path, const LabeledLogits& data);

using Json = nlohmann::ordered_json;

Json to_json(const ReliabilityBins& bins);
Json to_json(const MetricsReport& report);
Json to_json(const TemperatureFit& fit);
Json to_json(const AsymptoticReport& report);

/// Before/after calibration document emitted by the calibrate command.
Json calibration_report(const MetricsReport& before, const MetricsReport& after, const TemperatureFit& fit);

void write_report_json(const MetricsReport& report, const std::filesystem::path& path);
void write_report_json(const AsymptoticReport& report, const std::filesystem::path& path);

/// Pretty-prints `doc` plus a trailing newline. Throws std::runtime_error on
/// I/O failure.
void write_json(const Json& doc, const std::filesystem::path& path);

/// 17-significant-digit decimal rendering.
std::string format_double(double x);

}  // namespace ecal
