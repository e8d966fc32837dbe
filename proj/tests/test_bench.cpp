// Experiment grid parsing, CSV output and the example and oracle reports.

#include <doctest.h>

#include <sstream>

#include "srcperm/bench.hpp"

using namespace srcperm;
using nlohmann::json;

TEST_CASE("table algorithms come in column order") {
  std::vector<std::string> names;
  for (auto a : table_algorithms()) names.emplace_back(to_string(a));
  CHECK(names == std::vector<std::string>{"Random", "MaxT", "MaxRT", "MinT", "MinRT", "SeqPerm",
                                          "OnlinePerm", "FullKnowledge"});
}

TEST_CASE("grid parsing fills defaults and axes") {
  auto g = parse_grid(json::parse(R"({
    "algorithms": ["MinRT", "OnlinePerm"],
    "seeds": [4, 5],
    "universe": {"n_sources": 20, "total_tuples": 1500, "ta_ms": [1, 2]},
    "run": {"theta_sp": 0.1},
    "axes": {"k_fraction": [0.2, 0.4], "overhead_factor": [1.0, 1.4]}
  })"));
  CHECK(g.algorithms == std::vector<AlgoKind>{AlgoKind::MinRT, AlgoKind::OnlinePerm});
  CHECK(g.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(g.universe.n_sources == 20);
  CHECK(g.universe.latency.ta_max_ms == 2.0);
  CHECK(g.run.theta_sp == 0.1);
  auto cs = g.conditions();
  REQUIRE(cs.size() == 4);
  CHECK(cs[0].label == "k=0.2|Y1|");
  CHECK(cs[3].label == "overhead=1.4x");
  CHECK(cs[3].k_fraction == g.defaults.k_fraction);
  CHECK(cs[0].n_sources == 20);
}

TEST_CASE("grid parsing rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"algoritms": ["MinRT"]})")), Error);
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"universe": {"sources": 3}})")), Error);
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"algorithms": ["Quickest"]})")), Error);
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"seeds": []})")), Error);
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"axes": {"k_fraction": [0.0]}})")), Error);
  CHECK_THROWS_AS(parse_grid(json::parse(R"({"universe": {"replication": "zipf"}})")), Error);
  CHECK_THROWS_AS(load_grid("/nonexistent/grid.json"), Error);
}

TEST_CASE("grid runs write one CSV row per condition and algorithm") {
  ExperimentGrid g;
  g.universe.n_sources = 12;
  g.defaults.n_sources = 12;
  g.universe.n_distinct_tuples = 150;
  g.universe.total_tuples = 500;
  g.algorithms = {AlgoKind::MinT, AlgoKind::OnlinePerm};
  g.seeds = {1, 2, 3};
  g.k_fractions = {0.3, 0.9};
  auto rows = run_grid(g);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].condition == "k=0.3|Y1|");
  CHECK(rows[1].algo == AlgoKind::OnlinePerm);
  for (const auto& r : rows) {
    REQUIRE(r.times_ms.size() == 3);
    double mean = (r.times_ms[0] + r.times_ms[1] + r.times_ms[2]) / 3.0;
    CHECK(r.mean_time_ms == doctest::Approx(mean));
  }
  std::ostringstream a, b;
  write_csv(a, rows);
  g.jobs = 1;
  write_csv(b, run_grid(g));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("condition,algorithm,mean_time_ms,stddev_ms,shortfall_count\n", 0) == 0);
}

TEST_CASE("worked example report") {
  auto rep = verify_example1();
  CHECK(rep.ok());
  CHECK(rep.matches == 200);
  CHECK(rep.cross_k == doctest::Approx(96.8).epsilon(0.005));
  std::ostringstream out;
  print_report(out, rep);
  CHECK(out.str().find("200/200") != std::string::npos);
}

TEST_CASE("oracle study records dominance for every instance") {
  auto records = oracle_study(30, 3, 6, 3);
  REQUIRE(records.size() == 30);
  for (const auto& r : records) {
    CHECK(r.l >= 3);
    CHECK(r.l <= 6);
    CHECK(r.dominated);
    CHECK(r.online_ms >= r.opt_ms - 1e-9);
    CHECK(r.ratio >= 1.0 - 1e-9);
  }
  std::ostringstream out;
  write_oracle_csv(out, records);
  std::size_t lines = 0;
  for (char c : out.str()) lines += c == '\n';
  CHECK(lines == 31);
}
