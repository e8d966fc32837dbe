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
#include <map>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "srcperm/detection.hpp"
#include "srcperm/lattice.hpp"
#include "srcperm/types.hpp"

namespace srcperm {

struct LatencyModel {
  double ta_min_ms = 5.0;
  double ta_max_ms = 25.0;
  double tr_min_ms = 0.02;
  double tr_max_ms = 0.42;
};

enum class OverlapModel { venn_explicit, random_replication };

/// How many sources hold each distinct tuple under random replication.
enum class ReplicationModel {
  copying,    // tuples are fresh or copied from an earlier tuple plus one source
  uniform,    // start at 1, spread the surplus copies uniformly over tuples
  constant,   // exactly `constant_replication` copies per tuple
};

struct UniverseConfig {
  std::size_t n_sources = 50;
  std::size_t n_distinct_tuples = 600;
  std::size_t total_tuples = 3000;

  OverlapModel overlap = OverlapModel::random_replication;
  /// Venn mode: exact count per membership cell. ta/tr optionally fixed per source.
  std::map<CellSignature, std::size_t> venn_cells;
  std::vector<double> venn_ta_ms;
  std::vector<double> venn_tr_ms;

  ReplicationModel replication = ReplicationModel::copying;
  std::size_t constant_replication = 1;
  /// Replicas prefer sources in the home source's cluster.
  std::size_t cluster_size = 6;
  /// Chance of skipping a neighbour while placing replicas. The default 1
  /// places replicas by popularity alone; lower it to correlate clusters.
  double neighbour_skip = 1.0;
  /// Spread of home-source popularity; weights are uniform in [1−s, 1+s].
  double size_spread = 0.75;

  LatencyModel latency;
  /// Fraction of distinct tuples that answer the query (E1).
  double query_split = 0.5;

  /// Base cost of one counting query, multiplied by `overhead_factor`.
  double detection_cost_ms = 0.005;
  double overhead_factor = 1.0;

  std::vector<SourceId> unavailable;

  /// Throws Error on an inconsistent configuration.
  void validate() const;
};

/// Simulated time in milliseconds.
class EventClock {
 public:
  explicit EventClock(double start_ms = 0.0) : now_(start_ms) {}
  double now() const { return now_; }
  void advance(double ms);
  void advance_to(double t_ms);

 private:
  double now_;
};

/// Tuples one source returns for a query, with D17 timing.
struct TupleStream {
  SourceId source;
  std::vector<std::uint32_t> tuples;  // matching tuples in transfer order
  double start_ms = 0.0;
  double access_time_ms = 0.0;
  double per_tuple_ms = 0.0;
  bool failed = false;

  /// Arrival of the j-th tuple (0-based).
  double arrival_ms(std::size_t j) const {
    return start_ms + access_time_ms + static_cast<double>(j + 1) * per_tuple_ms;
  }
  /// Completion after transferring `m` tuples.
  double completion_ms(std::size_t m) const {
    return start_ms + access_time_ms + static_cast<double>(m) * per_tuple_ms;
  }
  double completion_ms() const { return completion_ms(failed ? 0 : tuples.size()); }
};

/// Seeded synthetic universe with full ground truth. Immutable after
/// generation apart from an internal cache of sampled lattices.
class Universe : public DetectionBackend {
 public:
  std::size_t source_count() const override { return ta_.size(); }
  double access_time_ms(SourceId s) const override { return ta_.at(s.index); }
  double per_tuple_ms(SourceId s) const override { return tr_.at(s.index); }
  double count_source(SourceId s, Predicate p, double sample_rate = 1.0) const override;
  double count_cell(const CellSignature& cell, Predicate p,
                    double sample_rate = 1.0) const override;

  const UniverseConfig& config() const { return config_; }
  bool available(SourceId s) const { return !unavailable_.at(s.index); }
  std::size_t tuple_count() const { return membership_.size(); }
  /// Tuple ids held by `s`, in transfer order.
  const std::vector<std::uint32_t>& tuples(SourceId s) const { return tuples_.at(s.index); }
  bool matches(std::uint32_t tuple, Predicate p) const;
  const CellSignature& membership(std::uint32_t tuple) const { return membership_.at(tuple); }
  std::size_t distinct_count(Predicate p) const;
  std::size_t cardinality(SourceId s, Predicate p) const;
  /// Exact nonzero cells for `p`.
  const std::unordered_map<CellSignature, double>& lattice(Predicate p) const;
  /// Exact statistics as a snapshot, every cell detected.
  StatsSnapshot ground_truth_snapshot(Predicate p) const;
  double detection_cost_ms() const { return config_.detection_cost_ms * config_.overhead_factor; }

 private:
  friend Universe generate(const UniverseConfig& config, std::uint64_t seed);

  struct Counts {
    std::unordered_map<CellSignature, double> cells;
    std::vector<double> cardinality;
  };
  const Counts& counts(Predicate p, double sample_rate) const;
  void build_counts();

  UniverseConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<double> ta_, tr_;
  std::vector<char> unavailable_;
  std::vector<std::vector<std::uint32_t>> tuples_;
  std::vector<CellSignature> membership_;
  std::vector<char> in_query_;
  Counts all_, query_;

  struct SampleCache {
    std::mutex mu;
    std::map<double, std::unique_ptr<Counts>> all, query;
  };
  std::shared_ptr<SampleCache> samples_ = std::make_shared<SampleCache>();
};

/// Deterministic in (config, seed). Throws Error on invalid configs.
Universe generate(const UniverseConfig& config, std::uint64_t seed);

/// The three-source instance with Venn cells {S1:10, S2:80, S3:60, S1S2:35,
/// S1S3:5, S2S3:10}, ta = 0 and tr = 0.7, 1.1, 1.5 ms. Every tuple answers
/// the query.
UniverseConfig example1_config();
Universe example1_universe();

TupleStream answer_tuple_query(const Universe& u, SourceId s, Predicate p, double start_ms);

/// Exact count; advances `clock` by the universe's per-detection cost.
double answer_count_query(const Universe& u, SourceId s, Predicate p, EventClock& clock);
double answer_count_query(const Universe& u, const CellSignature& cell, Predicate p,
                          EventClock& clock);

}  // namespace srcperm
