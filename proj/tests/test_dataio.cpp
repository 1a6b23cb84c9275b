#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecal/dataio.hpp"
#include "ecal/error.hpp"
#include "support.hpp"

using namespace ecal;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ECAL_TEST_DATA_DIR;

LabeledLogits parse(const std::string& text) {
  std::istringstream in(text);
  return read_logits_csv(in);
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("golden logits file") {
  auto data = read_logits_csv(kData / "golden_2class.csv");
  LogitMatrix<double> z(3, 2);
  z << 0.5, -1.25, -3, 2.0000000000000004, 1e-3, 0;
  LabelVector y(3);
  y << 0, 1, 1;
  CHECK(data == LabeledLogits(z, y));

  std::ostringstream out;
  write_logits_csv(out, data);
  CHECK(parse(out.str()) == data);
}

TEST_CASE("parse errors carry the line") {
  CHECK(parse_error_line("logit_0,logit_1,label\n1,2,0\n1,2,2\n") == 3);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,2\n") == 2);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,nan,0\n") == 2);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,inf,0\n") == 2);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,abc,0\n") == 2);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,2,0.5\n") == 2);
  CHECK(parse_error_line("logit_0,logit_1,label\n1,2,-1\n") == 2);
  CHECK(parse_error_line("logit_0,logit_2,label\n1,2,0\n") == 1);
  CHECK(parse_error_line("logit_0,label\n1,0\n") == 1);
  CHECK(parse_error_line("logit_0,logit_1,y\n1,2,0\n") == 1);
  CHECK(parse_error_line("") == 1);
  CHECK(parse_error_line("logit_0,logit_1,label\n") == 1);
  try {
    read_logits_csv(kData / "bad_label.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") == 0);
  }
}

TEST_CASE("lenient whitespace and line endings") {
  auto data = parse("logit_0, logit_1 ,label\r\n 1 ,+2,1\r\n\r\n3,4,0\r\n");
  CHECK(data.rows() == 2);
  CHECK(data.logits()(0, 1) == 2);
  CHECK(data.label(1) == 0);
}

TEST_CASE("write then read is bit-exact") {
  ecal::test::Rng rng(77);
  std::uniform_real_distribution<double> exponent(-300, 300);
  auto data = ecal::test::random_logits(rng, 1000, 4, 1e3);
  LogitMatrix<double> z = data.logits();
  std::uniform_int_distribution<int> pick(0, 3);
  for (int k = 0; k < 200; ++k) z(pick(rng) * 250 + k % 250, pick(rng)) *= std::pow(10.0, exponent(rng));
  z(0, 0) = std::numeric_limits<double>::denorm_min();
  z(1, 1) = -std::numeric_limits<double>::max();
  z(2, 2) = -0.0;
  LabeledLogits wide(z, data.labels());

  std::stringstream buffer;
  write_logits_csv(buffer, wide);
  auto back = read_logits_csv(buffer);
  REQUIRE(back.rows() == wide.rows());
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = 0; j < z.cols(); ++j) CHECK(back.logits()(i, j) == z(i, j));
  CHECK(back.labels() == wide.labels());
}

TEST_CASE("format_double round-trips") {
  for (double x : {0.1, 1.0 / 3, 1e-310, 6.02214076e23, -2.5}) CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("report JSON") {
  MetricsReport report;
  report.accuracy = 0.75;
  report.ece = 0.125;
  report.brier = 0.25;
  report.temperature = 1.5;
  report.bins.edges = Eigen::VectorXd::LinSpaced(3, 0, 1);
  report.bins.count = {0, 4};
  report.bins.confidence = {std::nullopt, 0.875};
  report.bins.accuracy = {std::nullopt, 0.75};

  const auto path = fs::temp_directory_path() / "ecal_report_test.json";
  write_report_json(report, path);
  const auto text = slurp(path);
  const auto doc = Json::parse(text);
  CHECK(doc["schema"] == kMetricsSchema);
  CHECK(doc.begin().key() == "schema");
  CHECK(doc["bins"]["confidence"][0].is_null());
  CHECK(doc["bins"]["gap"][0].is_null());
  CHECK(doc["bins"]["gap"][1] == 0.125);
  CHECK(doc["accuracy"] == 0.75);

  write_report_json(report, path);
  CHECK(slurp(path) == text);
  CHECK(text == slurp(kData / "golden_metrics_report.json"));

  AsymptoticReport asym;
  asym.calibration_curve = {{0.25, -0.01}, {0.75, 0.01}};
  write_report_json(asym, path);
  const auto adoc = Json::parse(slurp(path));
  CHECK(adoc["schema"] == kAsymptoticSchema);
  CHECK(adoc["calibration_curve"][1]["delta"] == 0.01);
  fs::remove(path);

  TemperatureFit fit;
  CHECK(to_json(fit)["top_n"].is_null());
  fit.method = FitMethod::ec_topn;
  fit.top_n = 3;
  CHECK(to_json(fit)["top_n"] == 3);

  CHECK_THROWS(write_report_json(report, fs::path("/nonexistent-dir/x.json")));
}
