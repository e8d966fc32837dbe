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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "srcperm/cost_model.hpp"
#include "srcperm/detection.hpp"
#include "srcperm/lattice.hpp"
#include "srcperm/shared_slot.hpp"
#include "srcperm/types.hpp"

namespace srcperm {

enum class AlgoKind {
  Random,
  MaxT,
  MaxRT,
  MinT,
  MinRT,
  GreedyQR,
  SeqPerm,
  OnlinePerm,
  FullKnowledge,
  BruteForce,
};

std::string_view to_string(AlgoKind kind);
AlgoKind parse_algo(std::string_view name);

struct PermCandidate {
  PermState perm;
  double n_sum = 0.0;
  double v_avg = 0.0;
  bool shortfall = false;
};

/// Snapshot preprocessed for repeated intersection queries: per-source cell
/// lists and the pairwise overlap matrix.
class OverlapIndex {
 public:
  explicit OverlapIndex(const StatsSnapshot& snapshot);

  std::size_t width() const { return cardinality_.size(); }
  double cardinality(SourceId s) const { return cardinality_[s.index]; }
  double full_cost(SourceId s) const { return full_cost_[s.index]; }
  SourceProfile profile(SourceId s) const;
  /// |S_a ∩ S_b|.
  double pairwise(SourceId a, SourceId b) const { return pairwise_[a.index * width() + b.index]; }

  /// Incremental |∩S| for every source against a growing prefix.
  class Coverage {
   public:
    explicit Coverage(const OverlapIndex& index);
    void add(SourceId s);
    double insec(SourceId s) const { return insec_[s.index]; }
    double residual(SourceId s) const;
    double rate(SourceId s) const;

   private:
    const OverlapIndex* index_;
    std::vector<char> covered_;
    std::vector<double> insec_;
  };

 private:
  std::vector<double> cardinality_, full_cost_, ta_, tr_;
  std::vector<double> cell_value_;
  std::vector<std::vector<std::uint32_t>> cell_members_;
  std::vector<std::vector<std::uint32_t>> source_cells_;
  std::vector<double> pairwise_;
};

/// |∩S_i| against perm.order for each source in `unselected`.
std::map<SourceId, double> insec(const PermState& perm, std::span<const SourceId> unselected,
                                 const StatsSnapshot& snapshot);
/// Σ residual tuples over perm.order.
double counter(const PermState& perm, const StatsSnapshot& snapshot);
double counter(const PermState& perm, const OverlapIndex& index);
/// Drops the sources behind the minimal prefix covering k (never the pinned
/// ones) back into `unselected`.
PermCandidate perm2set(PermState perm, std::size_t k, const OverlapIndex& index);
/// Moves `s` from unselected to the tail of the order.
void set2perm(PermState& perm, SourceId s);
/// Replaces `si` with `sj`, returning `si` and every source behind it to the
/// unselected set. Throws PinnedError if `si` is pinned.
void swap(PermState& perm, SourceId si, SourceId sj);

/// Candidates for replacing `anchor`, by |S_anchor ∩ S_j| / |S_anchor|
/// descending (ties by id). Ratios below theta_sp are dropped; `reduced`
/// keeps only the maximal-ratio candidates.
std::vector<std::pair<SourceId, double>> sort_candidates(SourceId anchor,
                                                         std::span<const SourceId> pool,
                                                         const OverlapIndex& index,
                                                         double theta_sp, bool reduced = false);

/// Work counter shared by the permutation algorithms; one unit is one
/// candidate rate evaluation.
struct WorkMeter {
  std::uint64_t units = 0;
};

PermCandidate greedy_qr(const QuerySpec& query, PermState perm, const OverlapIndex& index,
                        WorkMeter* work = nullptr);
PermCandidate greedy_qr(const QuerySpec& query, PermState perm, const StatsSnapshot& snapshot);

/// Best swap of `anchor` against the unselected sources and the sources ranked
/// behind it, each completed by greedy_qr. None when no candidate exists or
/// none beats `v_avg`.
std::optional<PermCandidate> re_perm(SourceId anchor, const QuerySpec& query, const PermState& perm,
                                     double v_avg, const OverlapIndex& index, double theta_sp,
                                     bool reduced = false, WorkMeter* work = nullptr);

struct OnlinePermOptions {
  double theta_sp = 0.05;
  bool reduced = false;
  /// Polled between RePerm calls; a new version restarts the sweep.
  std::function<SnapshotPtr()> latest_snapshot;
  const StopLatch* stop = nullptr;
  /// LockWrite.
  std::function<void(const PermState&)> publish;
};

struct OnlinePermStats {
  std::size_t reperm_calls = 0;
  std::size_t improvements = 0;
  std::size_t restarts = 0;
  std::uint64_t work_units = 0;
};

/// GreedyQR from the pinned prefix of `start`, then a head-to-tail RePerm
/// sweep over the unpinned positions, publishing every improvement.
PermCandidate online_perm(const QuerySpec& query, SnapshotPtr snapshot, const PermState& start,
                          const OnlinePermOptions& options = {}, OnlinePermStats* stats = nullptr);
/// Same, reading the pinned prefix from and publishing to `store`.
PermCandidate online_perm(const QuerySpec& query, SnapshotPtr snapshot, SharedSlot<PermState>& store,
                          OnlinePermOptions options = {}, OnlinePermStats* stats = nullptr);

/// Every source of the universe in the baseline's selection order.
std::vector<SourceId> baseline_order(AlgoKind kind, const StatsSnapshot& snapshot,
                                     std::uint64_t seed = 0);
/// baseline_order truncated at the minimal prefix covering k.
PermCandidate baseline(AlgoKind kind, const QuerySpec& query, const StatsSnapshot& snapshot,
                       std::uint64_t seed = 0);

struct OracleResult {
  PermState perm;
  TimeCost cost;
};

constexpr std::size_t kOracleMaxSources = 9;

/// Exhaustive search over prefix-closed permutations stopping at coverage
/// k. Ties go to the lexicographically smallest order.
OracleResult brute_force_opt(const QuerySpec& query, const StatsSnapshot& snapshot,
                             CostSemantics semantics = CostSemantics::marginal,
                             std::size_t max_sources = kOracleMaxSources);

/// Worst-case ratio of the OnlinePerm cost to the optimum, clamped to ≥ 1.
double approx_bound(const QuerySpec& query, const StatsSnapshot& snapshot);

}  // namespace srcperm
