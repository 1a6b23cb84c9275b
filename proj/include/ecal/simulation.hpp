#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <string>
#include <vector>

#include "ecal/metrics.hpp"
#include "ecal/synthetic.hpp"

namespace ecal {

struct SimulationConfig {
  double alpha = 1;
  Index d = 200;
  double lambda = 1e-4;
  GenerativeModel model;
  int reps = 50;
  std::uint64_t seed = 0;
  Index n_validation = 0;  // 0: same as the training size
  Index n_test = 0;        // 0: same as the training size
  int bins = kDefaultBins;

  Index train_size() const;
  void validate() const;
};

/// One repetition: train on n = round(alpha d) samples, fit T_TS and T_EC on
/// a fresh validation sample from the same teacher, score on a fresh test
/// sample. A failed repetition keeps ok = false and the reason in `note`.
struct SimulationRep {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double m = 0, q = 0, rho = 0;
  double test_error = 0;
  double t_ts = 0, t_ec = 0, delta_t = 0;
  double ece_raw = 0, ece_ts = 0, ece_ec = 0;
  std::string note;
};

/// Mean and standard error over the successful repetitions.
struct SimulationSummary {
  struct Stat {
    std::string name;
    double mean = 0;
    double std_err = 0;
  };
  std::vector<Stat> stats;
  int ok = 0;
  int failed = 0;

  const Stat& operator[](std::string_view name) const;
};

/// Repetition r uses seed + r, so results do not depend on scheduling.
SimulationRep simulate_rep(const SimulationConfig& config, int rep);
std::vector<SimulationRep> simulate(const SimulationConfig& config, unsigned threads = 0);
SimulationSummary summarize(const std::vector<SimulationRep>& reps);

void write_reps_csv(std::ostream& out, const std::vector<SimulationRep>& reps);
void write_summary_csv(std::ostream& out, const SimulationSummary& summary);

}  // namespace ecal
