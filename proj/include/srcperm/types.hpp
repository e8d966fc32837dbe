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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace srcperm {

/// Dense index of a source within one universe, in [0, l).
struct SourceId {
  std::uint32_t index = 0;

  constexpr SourceId() = default;
  constexpr explicit SourceId(std::uint32_t i) : index(i) {}
  constexpr explicit SourceId(std::size_t i) : index(static_cast<std::uint32_t>(i)) {}
  constexpr explicit SourceId(int i) : index(static_cast<std::uint32_t>(i)) {}

  friend constexpr auto operator<=>(SourceId, SourceId) = default;
};

/// Which tuples answer a query. `all` is the detection query over E, `query`
/// the top-k query over the E1 subset.
enum class Predicate { all, query };

std::string_view to_string(Predicate p);

struct QuerySpec {
  Predicate predicate = Predicate::query;
  std::size_t k = 1;
};

/// Timing and result-size view of one source for the active query.
struct SourceProfile {
  SourceId id;
  double access_time_ms = 0.0;  // ta
  double per_tuple_ms = 1.0;    // tr
  double cardinality = 0.0;     // |S_i| for the active query

  double full_cost_ms() const { return access_time_ms + per_tuple_ms * cardinality; }
};

/// Ordered selected sources plus the unselected remainder.
///
/// `order[0, pinned_prefix)` has already been dispatched by query execution
/// and is never reordered. `order` and `unselected` partition the universe.
struct PermState {
  std::vector<SourceId> order;
  std::size_t pinned_prefix = 0;
  std::vector<SourceId> unselected;  // kept sorted by id
  std::uint64_t version = 0;

  static PermState empty(std::size_t universe_size);

  bool is_pinned(SourceId s) const;
  bool contains(SourceId s) const;
  std::size_t universe_size() const { return order.size() + unselected.size(); }
  /// Throws std::logic_error if the partition invariant is broken.
  void validate() const;
};

/// "a,b|c,d": comma-separated ids with `|` after the pinned prefix.
std::string format_permutation(const PermState& perm);
/// Inverse of format_permutation; fills `unselected` from `universe_size`.
PermState parse_permutation(std::string_view text, std::size_t universe_size);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by swap() when asked to move a dispatched source.
class PinnedError : public Error {
 public:
  PinnedError() : Error("pinned") {}
};

}  // namespace srcperm

template <>
struct std::hash<srcperm::SourceId> {
  std::size_t operator()(srcperm::SourceId s) const noexcept { return s.index; }
};
