// Copyright 2026 The srcperm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: experiment grids, the worked-example check, statistics
// dumps and the brute-force oracle study.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "srcperm/bench.hpp"
#include "srcperm/detection.hpp"
#include "srcperm/lattice.hpp"
#include "srcperm/simulator.hpp"

namespace {

using namespace srcperm;

int cmd_run(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> repetitions, const std::string& trace_dir) {
  auto grid = load_grid(config);
  if (seed) {
    std::size_t n = repetitions.value_or(grid.seeds.size());
    grid.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) grid.seeds.push_back(*seed + i);
  }
  if (!trace_dir.empty()) grid.trace_dir = trace_dir;
  auto rows = run_grid(grid);
  if (out == "-") {
    write_csv(std::cout, rows);
    return 0;
  }
  std::ofstream file(out);
  if (!file) throw Error("cannot write " + out);
  write_csv(file, rows);
  if (!file) throw Error("write failed for " + out);
  return 0;
}

int cmd_verify() {
  auto report = verify_example1();
  print_report(std::cout, report);
  return report.ok() ? 0 : 1;
}

int cmd_dump(const std::string& config, std::uint64_t seed, bool example1, bool truth,
             const std::string& predicate, const std::string& out) {
  Universe universe = example1 ? example1_universe() : [&] {
    UniverseConfig ucfg;
    if (!config.empty()) ucfg = load_grid(config).universe;
    return generate(ucfg, seed);
  }();
  Predicate p = predicate == "query" ? Predicate::query : Predicate::all;
  StatsSnapshot snap;
  if (truth) {
    snap = universe.ground_truth_snapshot(p);
  } else {
    InitialDetectionConfig icfg;
    if (!config.empty()) icfg = load_grid(config).run.initial;
    if (example1) icfg.theta_sc = 0.0;
    snap = initial_detection(universe, icfg);
  }
  if (out == "-") {
    write_snapshot(std::cout, snap);
  } else {
    std::ofstream file(out);
    if (!file) throw Error("cannot write " + out);
    write_snapshot(file, snap);
  }
  return 0;
}

int cmd_oracle(std::size_t max_sources, std::size_t instances, std::uint64_t seed) {
  auto records = oracle_study(instances, 3, max_sources, seed);
  write_oracle_csv(std::cout, records);
  std::size_t dominated = 0, bounded = 0;
  for (const auto& r : records) {
    dominated += r.dominated;
    bounded += r.bound_ok;
  }
  std::cerr << "oracle dominance " << dominated << "/" << records.size() << ", bound satisfied "
            << bounded << "/" << records.size() << '\n';
  return dominated == records.size() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlap-aware source permutation: experiments and checks"};
  app.require_subcommand(1);

  std::string config, out = "-", trace_dir, predicate = "all";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;
  auto* run = app.add_subcommand("run", "Run an experiment grid and write the CSV table");
  run->add_option("--config", config, "JSON grid configuration")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "CSV output path, '-' for stdout");
  run->add_option("--seed", seed, "First seed; overrides the configured seed list");
  run->add_option("--repetitions", repetitions, "Seeds to use with --seed");
  run->add_option("--trace-dir", trace_dir, "Write one JSON trace per run here");

  auto* verify = app.add_subcommand("verify-example1", "Check the three-source worked example");

  std::uint64_t dump_seed = 1;
  bool example1 = false, truth = false;
  std::string dump_out = "-";
  auto* dump = app.add_subcommand("dump-stats", "Run initial detection and dump the lattice");
  dump->add_option("--config", config, "JSON grid configuration")->check(CLI::ExistingFile);
  dump->add_option("--seed", dump_seed, "Universe seed");
  dump->add_flag("--example1", example1, "Use the three-source worked example");
  dump->add_flag("--truth", truth, "Dump the ground-truth lattice instead");
  dump->add_option("--predicate", predicate, "all or query (with --truth)")
      ->check(CLI::IsMember({"all", "query"}));
  dump->add_option("--out", dump_out, "Output path, '-' for stdout");

  std::size_t max_sources = 8, instances = 200;
  std::uint64_t oracle_seed = 7;
  auto* oracle = app.add_subcommand("oracle", "Compare OnlinePerm with the brute-force optimum");
  oracle->add_option("--max-sources", max_sources, "Largest universe, at most 9")
      ->check(CLI::Range(3, 9));
  oracle->add_option("--instances", instances, "Random instances");
  oracle->add_option("--seed", oracle_seed, "Study seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, seed, repetitions, trace_dir);
    if (*verify) return cmd_verify();
    if (*dump) return cmd_dump(config, dump_seed, example1, truth, predicate, dump_out);
    if (*oracle) return cmd_oracle(max_sources, instances, oracle_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
