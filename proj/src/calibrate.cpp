#include "ecal/calibrate.hpp"

namespace ecal {

std::string_view to_string(FitMethod method) {
  switch (method) {
    case FitMethod::ec: return "ec";
    case FitMethod::ts: return "ts";
    case FitMethod::ec_topn: return "ec-topn";
  }
  return "unknown";
}

FitMethod parse_fit_method(std::string_view name) {
  if (name == "ec") return FitMethod::ec;
  if (name == "ts") return FitMethod::ts;
  if (name == "ec-topn") return FitMethod::ec_topn;
  throw InvalidInput("unknown calibration method '" + std::string(name) + "' (expected ec, ts or ec-topn)");
}

}  // namespace ecal
