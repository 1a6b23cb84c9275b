#include "doctest.h"

#include <cmath>
#include <sstream>

#include "ecal/error.hpp"
#include "ecal/parallel.hpp"
#include "ecal/simulation.hpp"
#include "ecal/sweep.hpp"

using namespace ecal;

TEST_CASE("grid and lambda parsing") {
  CHECK(parse_grid("1,2,5") == std::vector<double>{1, 2, 5});
  CHECK(parse_grid("1:3:3") == std::vector<double>{1, 2, 3});
  CHECK(parse_grid("4:4:1") == std::vector<double>{4});
  CHECK(parse_grid("0.5") == std::vector<double>{0.5});
  CHECK_THROWS_AS(parse_grid("1:2"), InvalidInput);
  CHECK_THROWS_AS(parse_grid("1:2:0"), InvalidInput);
  CHECK_THROWS_AS(parse_grid("a,b"), InvalidInput);

  CHECK(std::get<double>(parse_lambda("1e-4")) == 1e-4);
  CHECK(std::get<LambdaObjective>(parse_lambda("loss")) == LambdaObjective::loss);
  CHECK_THROWS_AS(parse_lambda("-1"), InvalidInput);
  CHECK_THROWS_AS(parse_lambda("best"), InvalidInput);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) { if (i == 7) throw SolverError("x"); }, 3), SolverError);
}

TEST_CASE("sweep rows") {
  std::vector<SweepPoint> points{{1, 1e-4, Target::affine}, {20, 1e-4, Target::affine}};
  const auto rows = run_sweep(points, {}, 2);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].alpha == 1);
  CHECK(rows[1].alpha == 20);
  CHECK(rows[0].converged);
  CHECK(rows[0].delta_t <= rows[1].delta_t);
  CHECK(rows[1].t_ts == doctest::Approx(1.242).epsilon(1e-3));
  CHECK(rows[1].t_ec == doctest::Approx(1.354).epsilon(1e-3));
  CHECK(rows[1].ece_ec <= rows[1].ece_ts);

  const auto serial = run_sweep(points, {}, 1);
  CHECK(serial[1].m == rows[1].m);

  std::ostringstream out;
  write_sweep_csv(out, rows);
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("alpha,lambda,target,m,q,v,T_TS,T_EC,ECE_raw,ECE_TS,ECE_EC,BS_raw,BS_TS,BS_EC,E_g", 0) == 0);
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);
}

TEST_CASE("a non-converged point still yields a row") {
  SEParams base;
  base.max_iter = 2;
  const auto row = evaluate_point({3, 1e-4, Target::logit}, base);
  CHECK_FALSE(row.converged);
  CHECK(row.note.find("not converged") != std::string::npos);
}

TEST_CASE("csv quoting") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"x\"") == "\"say \"\"x\"\"\"");
}

TEST_CASE("simulation is reproducible and order independent") {
  SimulationConfig cfg;
  cfg.alpha = 3;
  cfg.d = 30;
  cfg.reps = 4;
  cfg.seed = 9;
  const auto a = simulate(cfg, 1), b = simulate(cfg, 3);
  REQUIRE(a.size() == 4);
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].ok);
    CHECK(a[r].seed == 9 + r);
    CHECK(a[r].m == b[r].m);
    CHECK(a[r].t_ec == b[r].t_ec);
  }
  const auto single = simulate_rep(cfg, 2);
  CHECK(single.t_ts == a[2].t_ts);

  const auto s = summarize(a);
  CHECK(s.ok == 4);
  double mean = 0;
  for (const auto& r : a) mean += r.q / 4;
  CHECK(s["q"].mean == doctest::Approx(mean));
  CHECK(s["q"].std_err > 0);

  std::ostringstream reps, summary;
  write_reps_csv(reps, a);
  write_summary_csv(summary, s);
  CHECK(reps.str().rfind("rep,seed,ok,", 0) == 0);
  CHECK(summary.str().find("\nT_EC,") != std::string::npos);

  cfg.reps = 0;
  CHECK_THROWS_AS(simulate(cfg), InvalidInput);
}

TEST_CASE("failed repetitions are reported, not thrown") {
  SimulationConfig cfg;
  cfg.alpha = 0.2;
  cfg.d = 50;
  cfg.lambda = 0;
  cfg.reps = 2;
  const auto reps = simulate(cfg);
  for (const auto& r : reps) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.note.empty());
  }
  CHECK(summarize(reps).failed == 2);
}
