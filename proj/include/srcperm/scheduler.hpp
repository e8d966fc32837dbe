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
#include <vector>

#include "srcperm/detection.hpp"
#include "srcperm/permutation.hpp"
#include "srcperm/simulator.hpp"

namespace srcperm {

struct RunConfig {
  std::size_t query_threads = 1;
  double theta_sp = 0.05;
  bool reduced_reperm = false;

  /// Offline statistics; computed from the universe with `initial` when null.
  SnapshotPtr initial_snapshot;
  InitialDetectionConfig initial;
  OnlineDetectionConfig online;

  /// Add the simulated cost of every online detection finished before the
  /// stop signal to the total time.
  bool charge_detection = true;
  /// Simulated milliseconds per unit of permutation work (SeqPerm, and
  /// OnlinePerm when `charge_sp_online`). The default matches the measured
  /// host cost of a work unit.
  double perm_ms_per_unit = 0.0002;
  bool charge_sp_online = false;

  std::uint64_t seed = 0;  // Random baseline
};

struct TraceEvent {
  SourceId source;
  std::size_t thread = 0;
  double dispatch_ms = 0.0;
  double completion_ms = 0.0;
  std::size_t new_tuples = 0;
  std::size_t duplicate_tuples = 0;
  bool failed = false;
};

struct RunResult {
  AlgoKind algo = AlgoKind::OnlinePerm;
  std::size_t tuples_retrieved = 0;
  std::size_t distinct_tuples = 0;
  /// Query completion plus charged detection and permutation time.
  double simulated_time_ms = 0.0;
  double query_time_ms = 0.0;
  double detection_time_ms = 0.0;
  double perm_time_ms = 0.0;
  bool shortfall = false;
  std::size_t detections = 0;
  std::size_t perm_versions = 0;
  std::size_t stats_versions = 0;
  std::vector<TraceEvent> trace;
};

/// SC, SP and QE driven by one discrete-event loop. At equal timestamps SC
/// events run first, then SP, then QE.
RunResult run_online(const QuerySpec& query, const Universe& universe, const RunConfig& config);
/// OnlinePerm fed the ground-truth query lattice; no detection.
RunResult run_full_knowledge(const QuerySpec& query, const Universe& universe,
                             const RunConfig& config);
/// Counts every query cardinality, then runs a full OnlinePerm sweep on the
/// resulting statistics before QE starts. Counting and sweep work delay the
/// first dispatch.
RunResult run_sequential(const QuerySpec& query, const Universe& universe, const RunConfig& config);
/// Baseline order built up front from the initial statistics, then QE only.
RunResult run_baseline(AlgoKind kind, const QuerySpec& query, const Universe& universe,
                       const RunConfig& config);
/// Dispatches on `kind`.
RunResult run_algorithm(AlgoKind kind, const QuerySpec& query, const Universe& universe,
                        const RunConfig& config);

/// The query-level view of the initial statistics before any online
/// evidence: what the baselines and SeqPerm plan against.
SnapshotPtr initial_query_view(const StatsSnapshot& initial, const OnlineDetectionConfig& config);

/// JSON document with the run summary and per-source events.
void write_trace_json(std::ostream& out, const RunResult& result);

}  // namespace srcperm
