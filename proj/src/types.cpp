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

#include "srcperm/types.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace srcperm {

std::string_view to_string(Predicate p) {
  return p == Predicate::all ? "all" : "query";
}

PermState PermState::empty(std::size_t universe_size) {
  PermState p;
  p.unselected.reserve(universe_size);
  for (std::size_t i = 0; i < universe_size; ++i) p.unselected.emplace_back(i);
  return p;
}

bool PermState::is_pinned(SourceId s) const {
  return std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pinned_prefix), s) !=
         order.begin() + static_cast<std::ptrdiff_t>(pinned_prefix);
}

bool PermState::contains(SourceId s) const {
  return std::find(order.begin(), order.end(), s) != order.end();
}

void PermState::validate() const {
  if (pinned_prefix > order.size()) throw std::logic_error("pinned prefix exceeds order length");
  std::vector<char> seen(universe_size(), 0);
  auto mark = [&](SourceId s) {
    if (s.index >= seen.size() || seen[s.index]) {
      throw std::logic_error("permutation does not partition the universe");
    }
    seen[s.index] = 1;
  };
  for (auto s : order) mark(s);
  for (auto s : unselected) mark(s);
}

std::string format_permutation(const PermState& perm) {
  std::ostringstream out;
  for (std::size_t i = 0; i < perm.order.size(); ++i) {
    if (i == perm.pinned_prefix) {
      out << '|';
    } else if (i > 0) {
      out << ',';
    }
    out << perm.order[i].index;
  }
  if (perm.pinned_prefix == perm.order.size()) out << '|';
  return out.str();
}

PermState parse_permutation(std::string_view text, std::size_t universe_size) {
  PermState perm;
  bool seen_marker = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    char c = text[pos];
    if (c == '|') {
      if (seen_marker) throw Error("permutation has two pinned markers");
      seen_marker = true;
      perm.pinned_prefix = perm.order.size();
      ++pos;
      continue;
    }
    if (c == ',' || c == ' ') {
      ++pos;
      continue;
    }
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), value);
    if (ec != std::errc()) throw Error("malformed permutation: " + std::string(text));
    perm.order.emplace_back(value);
    pos = static_cast<std::size_t>(ptr - text.data());
  }
  if (!seen_marker) perm.pinned_prefix = 0;
  std::vector<char> used(universe_size, 0);
  for (auto s : perm.order) {
    if (s.index >= universe_size) throw Error("source id out of range in permutation");
    used[s.index] = 1;
  }
  for (std::size_t i = 0; i < universe_size; ++i) {
    if (!used[i]) perm.unselected.emplace_back(i);
  }
  perm.validate();
  return perm;
}

}  // namespace srcperm
