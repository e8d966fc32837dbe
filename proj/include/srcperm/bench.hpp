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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "srcperm/scheduler.hpp"
#include "srcperm/simulator.hpp"

namespace srcperm {

/// One row group of the experiment table: every axis pinned to a value.
struct Condition {
  std::string label;
  double k_fraction = 0.8;
  std::size_t query_threads = 1;
  std::size_t n_sources = 50;
  double query_split = 0.5;
  double overhead_factor = 1.0;
};

/// Axes vary one at a time around the defaults; with no axis the grid is the
/// single default condition.
struct ExperimentGrid {
  UniverseConfig universe;
  RunConfig run;
  Condition defaults;

  std::vector<double> k_fractions;
  std::vector<std::size_t> query_threads;
  std::vector<std::size_t> n_sources;
  std::vector<double> query_splits;
  std::vector<double> overhead_factors;

  std::vector<AlgoKind> algorithms;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  /// Worker threads for independent grid cells; 0 picks the hardware count.
  std::size_t jobs = 0;
  /// When set, one trace JSON per run is written here.
  std::string trace_dir;

  std::vector<Condition> conditions() const;
};

/// The eight algorithms in table column order.
const std::vector<AlgoKind>& table_algorithms();

ExperimentGrid parse_grid(const nlohmann::json& doc);
ExperimentGrid load_grid(const std::string& path);

struct GridRow {
  std::string condition;
  AlgoKind algo = AlgoKind::OnlinePerm;
  double mean_time_ms = 0.0;
  double stddev_ms = 0.0;
  std::size_t shortfall_count = 0;
  std::vector<double> times_ms;  // one per seed, in seed order
};

std::vector<GridRow> run_grid(const ExperimentGrid& grid);
void write_csv(std::ostream& out, const std::vector<GridRow>& rows);

struct Example1Report {
  std::size_t matches = 0;
  std::size_t total = 0;
  std::size_t ties = 0;  // matches where the oracle picked an equal-cost order
  std::vector<std::string> mismatches;
  double cross_k = 0.0;
  double cross_ms = 0.0;
  bool cross_ok = false;
  bool ok() const { return matches == total && cross_ok; }
};

/// Sweeps k = 1..200 on the three-source worked example against the piecewise table
/// and locates the S1S2S3 / S2S3S1 crosspoint.
Example1Report verify_example1(const UniverseConfig& config = example1_config());
void print_report(std::ostream& out, const Example1Report& report);

struct OracleRecord {
  std::uint64_t seed = 0;
  std::size_t l = 0;
  std::size_t k = 0;
  double online_ms = 0.0;  // marginal cost of the OnlinePerm order
  double opt_ms = 0.0;     // marginal optimum
  double online_avg_ms = 0.0;
  double opt_avg_ms = 0.0;
  double ratio = 1.0;      // prefix-average ratio
  double bound = 1.0;
  bool dominated = true;   // online_ms >= opt_ms
  bool bound_ok = true;    // ratio <= bound
};

/// Random small universes with ground-truth statistics, OnlinePerm against
/// the brute-force optimum.
std::vector<OracleRecord> oracle_study(std::size_t instances, std::size_t min_sources,
                                       std::size_t max_sources, std::uint64_t seed);
void write_oracle_csv(std::ostream& out, const std::vector<OracleRecord>& records);

}  // namespace srcperm
