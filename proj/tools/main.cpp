// ecal: temperature calibration and high-dimensional logistic-regression
// calibration theory from the command line.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecal/calibrate.hpp"
#include "ecal/dataio.hpp"
#include "ecal/error.hpp"
#include "ecal/simulation.hpp"
#include "ecal/state_evolution.hpp"
#include "ecal/sweep.hpp"
#include "ecal/synthetic.hpp"
#include "json_config.hpp"

namespace fs = std::filesystem;
using namespace ecal;

namespace {

enum Exit { kOk = 0, kFailure = 1, kBadInput = 2 };

// Writes through `emit` to a file, or to stdout for "-".
void with_output(const std::string& path, const std::function<void(std::ostream&)>& emit) {
  if (path == "-") {
    emit(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  emit(out);
  if (!out.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

struct ModelFlags {
  std::string target = "logit";
  double t_star = 1;
  double rho = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--target", target, "teacher link: logit, affine or constant")
        ->check(CLI::IsMember({"logit", "affine", "constant"}))
        ->capture_default_str();
    cmd->add_option("--t-star", t_star, "teacher temperature")->capture_default_str();
    cmd->add_option("--rho", rho, "teacher weight variance")->capture_default_str();
  }

  GenerativeModel model() const {
    GenerativeModel m{parse_target(target), t_star, rho};
    m.validate();
    return m;
  }
};

struct SolverFlags {
  int order = kDefaultQuadratureOrder;
  double damping = 0.5;
  double tol = 1e-9;
  int max_iter = 10000;
  unsigned threads = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--order", order, "quadrature order")->capture_default_str();
    cmd->add_option("--damping", damping, "fixed-point damping in [0, 1)")->capture_default_str();
    cmd->add_option("--tol", tol, "fixed-point tolerance")->capture_default_str();
    cmd->add_option("--max-iter", max_iter, "fixed-point iteration budget")->capture_default_str();
    cmd->add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
  }

  SEParams params(const GenerativeModel& model) const {
    SEParams p;
    p.model = model;
    p.quadrature_order = order;
    p.damping = damping;
    p.tol = tol;
    p.max_iter = max_iter;
    return p;
  }
};

// --- calibrate ------------------------------------------------------------

struct CalibrateCmd {
  std::string logits, test, method = "ec", out = "-";
  int top_n = 1, bins = kDefaultBins;

  void add(CLI::App& app, std::function<int()>& action) {
    auto* cmd = app.add_subcommand("calibrate", "fit a temperature on validation logits and report metrics");
    cmd->add_option("--logits", logits, "validation logits CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test, "logits CSV to evaluate on (default: the validation file)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--method", method, "ec, ts or ec-topn")
        ->check(CLI::IsMember({"ec", "ts", "ec-topn"}))
        ->capture_default_str();
    cmd->add_option("--n", top_n, "N for ec-topn")->capture_default_str();
    cmd->add_option("--bins", bins, "reliability bins")->capture_default_str();
    cmd->add_option("--out", out, "report JSON path, - for stdout")->capture_default_str();
    cmd->callback([this, &action] { action = [this] { return run(); }; });
  }

  int run() const {
    const auto val = read_logits_csv(fs::path(logits));
    const auto eval = test.empty() ? val : read_logits_csv(fs::path(test));
    TemperatureFit fit;
    switch (parse_fit_method(method)) {
      case FitMethod::ec: fit = fit_ec(val); break;
      case FitMethod::ts: fit = fit_ts(val); break;
      case FitMethod::ec_topn: fit = fit_ec_topn(val, top_n); break;
    }
    const auto before = evaluate(eval, 1.0, bins);
    const auto after = evaluate(eval, fit.temperature, bins);
    const auto doc = calibration_report(before, after, fit);
    if (out == "-")
      std::cout << doc.dump(2) << '\n';
    else
      write_json(doc, out);
    std::fprintf(stderr, "%s: T = %.6g%s, ECE %.4f -> %.4f\n", method.c_str(), fit.temperature,
                 fit.clamped ? " (clamped)" : "", before.ece, after.ece);
    return kOk;
  }
};

// --- simulate -------------------------------------------------------------

struct SimulateCmd {
  ModelFlags model;
  SimulationConfig config;
  double lambda = 1e-4;
  long long d = 200, n_val = 0, n_test = 0;
  std::string out = "-", summary;
  unsigned threads = 0;
  bool theory = false;
  int order = kDefaultQuadratureOrder;

  void add(CLI::App& app, std::function<int()>& action) {
    auto* cmd = app.add_subcommand("simulate", "train logistic regression on synthetic data and fit temperatures");
    cmd->add_option("--alpha", config.alpha, "samples per dimension")->capture_default_str();
    cmd->add_option("--d", d, "input dimension")->capture_default_str();
    cmd->add_option("--lambda", lambda, "ridge strength")->capture_default_str();
    model.add(cmd);
    cmd->add_option("--reps", config.reps, "repetitions")->capture_default_str();
    cmd->add_option("--seed", config.seed, "base seed; repetition r uses seed + r")->capture_default_str();
    cmd->add_option("--n-val", n_val, "validation size (0 = training size)")->capture_default_str();
    cmd->add_option("--n-test", n_test, "test size (0 = training size)")->capture_default_str();
    cmd->add_option("--bins", config.bins, "ECE bins")->capture_default_str();
    cmd->add_option("--threads", threads, "worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--out", out, "per-repetition CSV, - for stdout")->capture_default_str();
    cmd->add_option("--summary", summary, "aggregate CSV (default: next to --out)");
    cmd->add_flag("--theory", theory, "also solve the fixed-point equations and print the prediction");
    cmd->add_option("--order", order, "quadrature order for --theory")->capture_default_str();
    cmd->callback([this, &action] { action = [this] { return run(); }; });
  }

  int run() {
    config.model = model.model();
    config.lambda = lambda;
    config.d = d;
    config.n_validation = n_val;
    config.n_test = n_test;
    config.validate();

    const auto reps = simulate(config, threads);
    const auto agg = summarize(reps);
    with_output(out, [&](std::ostream& os) { write_reps_csv(os, reps); });
    std::string summary_path = summary;
    if (summary_path.empty() && out != "-") {
      fs::path p(out);
      summary_path = (p.parent_path() / (p.stem().string() + ".summary.csv")).string();
    }
    if (!summary_path.empty()) with_output(summary_path, [&](std::ostream& os) { write_summary_csv(os, agg); });

    for (const auto& r : reps)
      if (!r.ok) std::fprintf(stderr, "rep %d (seed %llu) failed: %s\n", r.rep, (unsigned long long)r.seed, r.note.c_str());
    std::fprintf(stderr, "%d/%d repetitions ok; m = %.4f +- %.4f, q = %.4f +- %.4f, delta_T = %.4f +- %.4f\n",
                 agg.ok, config.reps, agg["m"].mean, agg["m"].std_err, agg["q"].mean, agg["q"].std_err,
                 agg["delta_T"].mean, agg["delta_T"].std_err);
    if (theory) {
      SEParams p;
      p.alpha = config.alpha;
      p.lambda = config.lambda;
      p.model = config.model;
      p.quadrature_order = order;
      const auto ov = se_fixed_point(p);
      std::fprintf(stderr, "theory: m = %.4f, q = %.4f (%s)\n", ov.m, ov.q, ov.converged ? "converged" : "not converged");
    }
    return agg.ok > 0 ? kOk : kFailure;
  }
};

// --- state-evolution / sweep ----------------------------------------------

struct GridCmd {
  ModelFlags model;
  SolverFlags solver;
  std::string alpha_grid = "1:20:20", lambda = "0.0001", out = "-";
  std::vector<std::string> targets;
  bool all_targets;

  explicit GridCmd(bool sweep) : all_targets(sweep) {}

  void add(CLI::App& app, std::function<int()>& action) {
    auto* cmd = all_targets
                    ? app.add_subcommand("sweep", "relative temperature gap over an alpha grid for several targets")
                    : app.add_subcommand("state-evolution", "fixed points and asymptotic metrics over an alpha grid");
    cmd->add_option("--alpha-grid", alpha_grid, "comma list or start:stop:count")->capture_default_str();
    cmd->add_option("--lambda", lambda, "ridge strength, or error/loss for the optimal one")->capture_default_str();
    if (all_targets) {
      targets = {"logit", "affine", "constant"};
      cmd->add_option("--targets", targets, "teacher links")
          ->delimiter(',')
          ->check(CLI::IsMember({"logit", "affine", "constant"}))
          ->capture_default_str();
      cmd->add_option("--t-star", model.t_star, "teacher temperature")->capture_default_str();
      cmd->add_option("--rho", model.rho, "teacher weight variance")->capture_default_str();
    } else {
      model.add(cmd);
    }
    solver.add(cmd);
    cmd->add_option("--out", out, "CSV path, - for stdout")->capture_default_str();
    cmd->callback([this, &action] { action = [this] { return run(); }; });
  }

  int run() const {
    const auto alphas = parse_grid(alpha_grid);
    for (double a : alphas)
      if (!(a > 0)) throw InvalidInput("alpha values must be positive");
    const auto choice = parse_lambda(lambda);
    const auto base = solver.params(model.model());
    base.validate();

    std::vector<SweepPoint> points;
    const auto names = all_targets ? targets : std::vector<std::string>{model.target};
    for (const auto& t : names)
      for (double a : alphas) points.push_back({a, choice, parse_target(t)});
    const auto rows = run_sweep(points, base, solver.threads);
    with_output(out, [&](std::ostream& os) { write_sweep_csv(os, rows); });

    int unconverged = 0;
    for (const auto& r : rows) unconverged += r.converged ? 0 : 1;
    if (unconverged > 0) std::fprintf(stderr, "warning: %d of %zu fixed points did not converge\n", unconverged, rows.size());
    return kOk;
  }
};

// --- density --------------------------------------------------------------

struct DensityCmd {
  ModelFlags model;
  SolverFlags solver;
  double alpha = 20;
  std::string lambda = "0.0001", out = "-";
  int grid = 50, curve_points = 99;

  void add(CLI::App& app, std::function<int()>& action) {
    auto* cmd = app.add_subcommand("density", "joint density of student and teacher probabilities");
    cmd->add_option("--alpha", alpha, "samples per dimension")->capture_default_str();
    cmd->add_option("--lambda", lambda, "ridge strength, or error/loss")->capture_default_str();
    model.add(cmd);
    solver.add(cmd);
    cmd->add_option("--grid", grid, "histogram resolution per axis")->capture_default_str();
    cmd->add_option("--curve-points", curve_points, "points of the conditional-mean curve")->capture_default_str();
    cmd->add_option("--out", out, "JSON path, - for stdout")->capture_default_str();
    cmd->callback([this, &action] { action = [this] { return run(); }; });
  }

  int run() const {
    if (grid < 1) throw InvalidInput("grid must be at least 1");
    if (curve_points < 1) throw InvalidInput("curve-points must be at least 1");
    auto params = solver.params(model.model());
    params.alpha = alpha;

    Overlaps ov;
    const auto choice = parse_lambda(lambda);
    if (const auto* fixed = std::get_if<double>(&choice)) {
      params.lambda = *fixed;
      params.validate();
      ov = se_fixed_point(params);
    } else {
      params.validate();
      const auto fit = optimize_lambda(alpha, params.model, std::get<LambdaObjective>(choice), params);
      params.lambda = fit.lambda;
      ov = fit.overlaps;
    }
    const auto& m = params.model;
    const int order = params.quadrature_order;
    const double t_ts = fit_ts_asymptotic(ov, m, order).temperature;
    const double t_ec = fit_ec_asymptotic(ov, m, order).temperature;

    Eigen::VectorXd ell(curve_points);
    for (int k = 0; k < curve_points; ++k) ell[k] = (k + 1.0) / (curve_points + 1.0);

    Json doc;
    doc["schema"] = "ecal.density/1";
    doc["alpha"] = alpha;
    doc["lambda"] = params.lambda;
    doc["target"] = std::string(to_string(m.target));
    doc["overlaps"] = {{"m", ov.m}, {"q", ov.q}, {"v", ov.v}, {"converged", ov.converged}};
    doc["error"] = asymptotic_error(ov, m, order);
    doc["grid"] = grid;
    doc["ell"] = std::vector<double>(ell.data(), ell.data() + ell.size());
    doc["diagonal"] = doc["ell"];

    Json panels = Json::array();
    for (const auto& [name, t] : {std::pair{"raw", 1.0}, {"ts", t_ts}, {"ec", t_ec}}) {
      const auto density = joint_density_grid(ov, m, t, grid, order).density();
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(grid), std::vector<double>(grid));
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) rows[i][j] = density(i, j);
      const auto curve = conditional_mean_curve(ov, m, t, ell, order);
      Json panel;
      panel["name"] = name;
      panel["temperature"] = t;
      panel["ece"] = asymptotic_ece(ov, m, t, EceIntegral::full_line, order);
      panel["ece_half_line"] = asymptotic_ece(ov, m, t, EceIntegral::half_line, order);
      panel["brier"] = asymptotic_brier(ov, m, t, order);
      panel["conditional_mean"] = std::vector<double>(curve.data(), curve.data() + curve.size());
      panel["density"] = rows;
      panels.push_back(std::move(panel));
    }
    doc["panels"] = std::move(panels);

    if (out == "-")
      std::cout << doc.dump(2) << '\n';
    else
      write_json(doc, out);
    std::fprintf(stderr, "T_TS = %.4f, T_EC = %.4f, ECE raw/TS/EC = %.2f%% / %.2f%% / %.2f%%\n", t_ts, t_ec,
                 100 * doc["panels"][0]["ece"].get<double>(), 100 * doc["panels"][1]["ece"].get<double>(),
                 100 * doc["panels"][2]["ece"].get<double>());
    return kOk;
  }
};

// --- corrupt --------------------------------------------------------------

struct CorruptCmd {
  std::string logits, out = "-";
  std::vector<int> classes;
  std::uint64_t seed = 0;

  void add(CLI::App& app, std::function<int()>& action) {
    auto* cmd = app.add_subcommand("corrupt", "replace the labels of chosen classes with uniform random labels");
    cmd->add_option("--logits", logits, "input logits CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--classes", classes, "comma-separated class indices")->required()->delimiter(',');
    cmd->add_option("--seed", seed, "random seed")->capture_default_str();
    cmd->add_option("--out", out, "output logits CSV, - for stdout")->capture_default_str();
    cmd->callback([this, &action] { action = [this] { return run(); }; });
  }

  int run() const {
    const auto data = read_logits_csv(fs::path(logits));
    const auto result = corrupt_labels(data, classes, seed);
    with_output(out, [&](std::ostream& os) { write_logits_csv(os, result.data); });
    const double fraction = static_cast<double>(result.touched) / static_cast<double>(data.rows());
    std::fprintf(stderr, "relabelled %lld of %lld rows (%.2f%%)\n", static_cast<long long>(result.touched),
                 static_cast<long long>(data.rows()), 100 * fraction);
    if (result.touched == 0) std::fprintf(stderr, "warning: none of the given classes occur in the labels\n");
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temperature calibration: empirical fits and asymptotic theory"};
  app.config_formatter(std::make_shared<ecal::cli::JsonConfig>());
  app.set_config("--config", "", "JSON file with option values (sections per subcommand)");
  app.require_subcommand(1);
  app.fallthrough();

  std::function<int()> action;
  CalibrateCmd calibrate;
  SimulateCmd simulate_cmd;
  GridCmd state_evolution(false), sweep(true);
  DensityCmd density;
  CorruptCmd corrupt;
  calibrate.add(app, action);
  simulate_cmd.add(app, action);
  state_evolution.add(app, action);
  sweep.add(app, action);
  density.add(app, action);
  corrupt.add(app, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    return action ? action() : kBadInput;
  } catch (const UnsatisfiableTarget& e) {
    std::fprintf(stderr, "error: unsatisfiable calibration target: %s\n", e.what());
    return kBadInput;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: malformed input, %s\n", e.what());
    return kBadInput;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
