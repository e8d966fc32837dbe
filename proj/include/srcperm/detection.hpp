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

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "srcperm/lattice.hpp"
#include "srcperm/maxent.hpp"
#include "srcperm/types.hpp"

namespace srcperm {

class SourceUnavailable : public Error {
 public:
  explicit SourceUnavailable(SourceId s)
      : Error("source " + std::to_string(s.index) + " unavailable"), source_(s) {}
  SourceId source() const { return source_; }

 private:
  SourceId source_;
};

/// Counting queries the statistics collector can issue.
class DetectionBackend {
 public:
  virtual ~DetectionBackend() = default;

  virtual std::size_t source_count() const = 0;
  virtual double access_time_ms(SourceId s) const = 0;
  virtual double per_tuple_ms(SourceId s) const = 0;

  /// Tuples of `s` matching `p`. With sample_rate < 1 only sampled tuples
  /// are counted. Throws SourceUnavailable.
  virtual double count_source(SourceId s, Predicate p, double sample_rate = 1.0) const = 0;
  /// Tuples matching `p` whose membership is exactly `cell`.
  virtual double count_cell(const CellSignature& cell, Predicate p,
                            double sample_rate = 1.0) const = 0;
};

/// One-way termination latch shared by the workers of a run.
class StopLatch {
 public:
  void raise() { flag_.store(true, std::memory_order_release); }
  bool raised() const { return flag_.load(std::memory_order_acquire); }

 private:
  std::atomic<bool> flag_{false};
};

enum class ThresholdMode { absolute, relative };

struct InitialDetectionConfig {
  double theta_sc = 0.005;
  /// absolute: compare cell values to θ directly. relative: to θ·Σ|Ŝ_i|.
  ThresholdMode threshold_mode = ThresholdMode::absolute;
  /// 1.0 is a full scan; smaller values count a deterministic sample and
  /// scale every count by 1/rate.
  double sample_rate = 1.0;
  /// Sweep cap for intermediate rounds, whose estimates only feed the
  /// pruning test; the last round uses the full cap.
  std::size_t round_iterations = 2000;
  MaxEntOptions maxent;
};

struct DetectionReport {
  std::size_t rounds = 0;
  std::size_t cardinality_queries = 0;
  std::size_t cell_queries = 0;
  std::size_t pruned = 0;
  std::vector<SourceId> unavailable;
  std::vector<std::string> diagnostics;
};

/// Level-by-level lattice construction over the all-tuples query: detect
/// cardinalities, then per round prune, detect survivors, admit children
/// whose detected parents exceed the threshold, and estimate them by MaxEnt.
StatsSnapshot initial_detection(const DetectionBackend& backend,
                                const InitialDetectionConfig& config = {},
                                DetectionReport* report = nullptr);

/// Extrapolates undetected query cardinalities from the detected ratio
/// S_(j) / Ŝ_(j). Sources with Ŝ = 0 are left out of the ratio; with no usable
/// ratio the initial cardinalities are scaled by `prior_ratio`.
std::map<SourceId, double> online_scale_cardinalities(const std::map<SourceId, double>& partial,
                                                      const StatsSnapshot& initial,
                                                      std::span<const SourceId> perm,
                                                      double prior_ratio = 1.0);

struct OnlineDetectionConfig {
  /// Cells detected between re-solves in the second sub-stage.
  std::size_t batch_size = 1;
  double prior_ratio = 1.0;
  MaxEntOptions maxent{1e-6, 10000, 200, false};
};

/// Query-level statistics refinement, one detection batch per step().
///
/// Sub-stage 1 detects query cardinalities in `perm_hint` order and re-solves
/// MaxEnt over every materialized initial cell (detected rows hard,
/// extrapolated rows soft). Sub-stage 2 detects query-level cell values in
/// descending |w − ŵ| order, fixed at entry, re-solving after each batch.
class OnlineDetector {
 public:
  OnlineDetector(const DetectionBackend& backend, Predicate predicate, SnapshotPtr initial,
                 std::vector<SourceId> perm_hint, OnlineDetectionConfig config = {});

  /// Snapshot derived from the initial lattice before any online evidence.
  SnapshotPtr current() const { return current_; }
  bool done() const;
  /// Count queries the next step() will issue.
  std::size_t next_step_queries() const;
  /// Runs one detection batch and returns the newly published snapshot.
  SnapshotPtr step();

  std::size_t detections() const { return detections_; }
  Stage stage() const { return current_->stage; }
  /// Cell detection order chosen at sub-stage 2 entry, with its |w − ŵ| keys.
  const std::vector<std::pair<CellSignature, double>>& detection_order() const { return order_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  void enter_substage_2();
  SnapshotPtr publish(Stage stage);
  void resolve();

  const DetectionBackend& backend_;
  Predicate predicate_;
  SnapshotPtr initial_;
  std::vector<SourceId> perm_hint_;
  OnlineDetectionConfig config_;

  std::vector<CellSignature> cells_;          // materialized initial cells with ŵ > 0
  std::vector<double> initial_values_;        // ŵ
  std::vector<double> values_;                // current query-level estimate
  std::vector<char> cell_known_;
  std::unique_ptr<ScalingSolver> solver_;

  std::map<SourceId, double> detected_;       // query cardinalities observed so far
  std::vector<double> cardinality_;           // detected or extrapolated
  std::vector<char> available_;
  std::size_t next_source_ = 0;
  std::vector<std::pair<CellSignature, double>> order_;
  std::vector<std::size_t> order_index_;
  std::size_t next_cell_ = 0;
  bool in_substage_2_ = false;

  std::size_t detections_ = 0;
  std::uint64_t version_ = 0;
  SnapshotPtr current_;
  std::vector<std::string> diagnostics_;
};

/// Runs an OnlineDetector to completion or until `stop` is raised, returning
/// every published snapshot (the first is the initial-derived one).
std::vector<SnapshotPtr> online_detection(const DetectionBackend& backend, const QuerySpec& query,
                                          SnapshotPtr initial, std::vector<SourceId> perm_hint,
                                          const StopLatch& stop, OnlineDetectionConfig config = {});

}  // namespace srcperm
