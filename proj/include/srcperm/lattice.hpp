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
#include <initializer_list>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srcperm/types.hpp"

namespace srcperm {

/// Membership pattern of one Venn region over l sources.
///
/// Bit i set means "in S_i", clear means "not in S_i". Two signatures with the
/// same bits are the same cell regardless of how they were produced.
class CellSignature {
 public:
  CellSignature() = default;
  explicit CellSignature(std::size_t width);
  CellSignature(std::size_t width, std::initializer_list<std::uint32_t> members);
  static CellSignature from_members(std::size_t width, std::span<const SourceId> members);

  std::size_t width() const { return width_; }
  bool test(SourceId s) const;
  void set(SourceId s);
  void reset(SourceId s);
  std::size_t level() const;
  bool empty() const { return level() == 0; }
  std::vector<SourceId> members() const;
  bool intersects(const CellSignature& other) const;

  /// Most-significant digit first, ceil(width/4) lowercase digits.
  std::string to_hex() const;
  static CellSignature from_hex(std::string_view hex, std::size_t width);

  std::size_t hash() const;

  friend bool operator==(const CellSignature&, const CellSignature&) = default;
  friend std::strong_ordering operator<=>(const CellSignature& a, const CellSignature& b);

 private:
  std::uint32_t width_ = 0;
  std::vector<std::uint64_t> words_;
};

enum class Provenance { detected, maxent_estimated, pruned_zero };
std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

struct LatticeCell {
  CellSignature signature;
  double value = 0.0;
  Provenance provenance = Provenance::maxent_estimated;

  /// Pruned cells count as zero in every sum.
  double effective_value() const {
    return provenance == Provenance::pruned_zero ? 0.0 : value;
  }
};

enum class Stage { initial, online_substage_1, online_substage_2, final };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view text);

struct SourceStats {
  double access_time_ms = 0.0;
  double per_tuple_ms = 1.0;
  double cardinality = 0.0;
  bool detected = false;  // cardinality measured rather than extrapolated
  bool available = true;
};

/// Statistics input consumed by the permutation layer. Published as
/// shared_ptr<const StatsSnapshot> and never mutated afterwards.
struct StatsSnapshot {
  std::uint64_t version = 0;
  Stage stage = Stage::initial;
  double theta_sc = 0.0;
  std::vector<SourceStats> sources;
  std::map<CellSignature, LatticeCell> cells;

  std::size_t width() const { return sources.size(); }
  SourceProfile profile(SourceId s) const;
  /// Sum of materialized cell values; the distinct-tuple estimate.
  double total_cell_mass() const;
  /// |Σ cells containing s − cardinality(s)| for each source.
  std::vector<double> constraint_residuals() const;
};

using SnapshotPtr = std::shared_ptr<const StatsSnapshot>;

/// Signatures one membership bit shallower. Empty for level <= 1.
std::vector<CellSignature> parents(const CellSignature& sig);

/// Non-pruned cells whose signature contains `source`.
std::vector<CellSignature> ancestor_constraint_cells(SourceId source, const StatsSnapshot& snapshot);

/// |∩S_target| given that every source in `prefix` has already been read:
/// the mass of cells containing the target and at least one prefix source.
double intersect_count(std::span<const SourceId> prefix, SourceId target,
                       const StatsSnapshot& snapshot);

/// Σ over cells containing both sources.
double pairwise_intersection(SourceId a, SourceId b, const StatsSnapshot& snapshot);

// Line-oriented dump: header lines, then `<hex> <value> <provenance>` per cell.
void write_snapshot(std::ostream& out, const StatsSnapshot& snapshot);
StatsSnapshot read_snapshot(std::istream& in);

}  // namespace srcperm

template <>
struct std::hash<srcperm::CellSignature> {
  std::size_t operator()(const srcperm::CellSignature& s) const noexcept { return s.hash(); }
};
