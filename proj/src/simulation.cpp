#include "ecal/simulation.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "ecal/calibrate.hpp"
#include "ecal/dataio.hpp"
#include "ecal/error.hpp"
#include "ecal/parallel.hpp"
#include "ecal/sweep.hpp"

namespace ecal {
namespace {

// Independent streams for the validation and test draws of one repetition.
Rng substream(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

}  // namespace

Index SimulationConfig::train_size() const { return static_cast<Index>(std::llround(alpha * static_cast<double>(d))); }

void SimulationConfig::validate() const {
  model.validate();
  if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidInput("alpha must be positive");
  if (d < 1) throw InvalidInput("d must be at least 1");
  if (train_size() < 1) throw InvalidInput("alpha * d rounds to zero samples");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be non-negative");
  if (reps < 1) throw InvalidInput("reps must be at least 1");
  if (n_validation < 0 || n_test < 0) throw InvalidInput("sample sizes must be non-negative");
  if (bins < 1) throw InvalidInput("bin count must be at least 1");
}

SimulationRep simulate_rep(const SimulationConfig& config, int rep) {
  SimulationRep out;
  out.rep = rep;
  out.seed = config.seed + static_cast<std::uint64_t>(rep);
  const Index n = config.train_size();
  try {
    const auto train = sample_dataset(config.model, n, config.d, out.seed);
    const auto sol = erm_train(train, config.lambda);
    out.m = sol.m_emp;
    out.q = sol.q_emp;
    out.rho = sol.rho_emp;

    auto val_rng = substream(out.seed, 1);
    const auto val = sample_with_teacher(config.model, train.w_star,
                                         config.n_validation > 0 ? config.n_validation : n, val_rng);
    auto test_rng = substream(out.seed, 2);
    const auto test = sample_with_teacher(config.model, train.w_star, config.n_test > 0 ? config.n_test : n,
                                          test_rng);
    const auto val_logits = to_labeled_logits(val, sol.w_hat);
    const auto test_logits = to_labeled_logits(test, sol.w_hat);

    out.test_error = 1 - accuracy(test_logits);
    out.ece_raw = binned_ece(test_logits, 1.0, config.bins).ece;
    out.t_ts = fit_ts(val_logits).temperature;
    out.ece_ts = binned_ece(test_logits, out.t_ts, config.bins).ece;
    out.t_ec = fit_ec(val_logits).temperature;
    out.ece_ec = binned_ece(test_logits, out.t_ec, config.bins).ece;
    out.delta_t = std::abs(out.t_ec - out.t_ts) / out.t_ts;
    out.ok = true;
  } catch (const std::exception& e) {
    out.note = e.what();
  }
  return out;
}

std::vector<SimulationRep> simulate(const SimulationConfig& config, unsigned threads) {
  config.validate();
  std::vector<SimulationRep> reps(static_cast<std::size_t>(config.reps));
  parallel_for(
      reps.size(), [&](std::size_t r) { reps[r] = simulate_rep(config, static_cast<int>(r)); }, threads);
  return reps;
}

const SimulationSummary::Stat& SimulationSummary::operator[](std::string_view name) const {
  for (const auto& s : stats)
    if (s.name == name) return s;
  throw InvalidInput("no statistic named '" + std::string(name) + "'");
}

SimulationSummary summarize(const std::vector<SimulationRep>& reps) {
  using Field = double SimulationRep::*;
  static const std::pair<const char*, Field> fields[] = {
      {"m", &SimulationRep::m},           {"q", &SimulationRep::q},
      {"rho", &SimulationRep::rho},       {"test_error", &SimulationRep::test_error},
      {"T_TS", &SimulationRep::t_ts},     {"T_EC", &SimulationRep::t_ec},
      {"delta_T", &SimulationRep::delta_t}, {"ECE_raw", &SimulationRep::ece_raw},
      {"ECE_TS", &SimulationRep::ece_ts}, {"ECE_EC", &SimulationRep::ece_ec},
  };
  SimulationSummary out;
  for (const auto& r : reps) (r.ok ? out.ok : out.failed)++;
  for (const auto& [name, field] : fields) {
    double sum = 0, sum_sq = 0;
    for (const auto& r : reps)
      if (r.ok) sum += r.*field;
    const double mean = out.ok > 0 ? sum / out.ok : std::nan("");
    for (const auto& r : reps)
      if (r.ok) sum_sq += (r.*field - mean) * (r.*field - mean);
    const double se = out.ok > 1 ? std::sqrt(sum_sq / (out.ok - 1) / out.ok) : std::nan("");
    out.stats.push_back({name, mean, se});
  }
  return out;
}

void write_reps_csv(std::ostream& out, const std::vector<SimulationRep>& reps) {
  out << "rep,seed,ok,m,q,rho,test_error,T_TS,T_EC,delta_T,ECE_raw,ECE_TS,ECE_EC,note\n";
  for (const auto& r : reps) {
    out << r.rep << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',';
    for (double x : {r.m, r.q, r.rho, r.test_error, r.t_ts, r.t_ec, r.delta_t, r.ece_raw, r.ece_ts, r.ece_ec})
      out << (r.ok ? format_double(x) : "nan") << ',';
    out << csv_field(r.note) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const SimulationSummary& summary) {
  out << "quantity,mean,std_err,ok,failed\n";
  for (const auto& s : summary.stats)
    out << s.name << ',' << format_double(s.mean) << ',' << format_double(s.std_err) << ',' << summary.ok << ','
        << summary.failed << '\n';
}

}  // namespace ecal
