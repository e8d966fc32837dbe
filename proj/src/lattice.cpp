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

#include "srcperm/lattice.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace srcperm {

namespace {
constexpr std::size_t kWordBits = 64;

std::size_t words_for(std::size_t width) { return (width + kWordBits - 1) / kWordBits; }

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

CellSignature::CellSignature(std::size_t width)
    : width_(static_cast<std::uint32_t>(width)), words_(words_for(width), 0) {}

CellSignature::CellSignature(std::size_t width, std::initializer_list<std::uint32_t> members)
    : CellSignature(width) {
  for (auto m : members) set(SourceId(m));
}

CellSignature CellSignature::from_members(std::size_t width, std::span<const SourceId> members) {
  CellSignature sig(width);
  for (auto m : members) sig.set(m);
  return sig;
}

bool CellSignature::test(SourceId s) const {
  if (s.index >= width_) return false;
  return (words_[s.index / kWordBits] >> (s.index % kWordBits)) & 1U;
}

void CellSignature::set(SourceId s) {
  if (s.index >= width_) throw std::out_of_range("source outside signature width");
  words_[s.index / kWordBits] |= std::uint64_t{1} << (s.index % kWordBits);
}

void CellSignature::reset(SourceId s) {
  if (s.index >= width_) throw std::out_of_range("source outside signature width");
  words_[s.index / kWordBits] &= ~(std::uint64_t{1} << (s.index % kWordBits));
}

std::size_t CellSignature::level() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<SourceId> CellSignature::members() const {
  std::vector<SourceId> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    auto bits = words_[w];
    while (bits) {
      int b = std::countr_zero(bits);
      out.emplace_back(w * kWordBits + static_cast<std::size_t>(b));
      bits &= bits - 1;
    }
  }
  return out;
}

bool CellSignature::intersects(const CellSignature& other) const {
  auto n = std::min(words_.size(), other.words_.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (words_[i] & other.words_[i]) return true;
  }
  return false;
}

std::string CellSignature::to_hex() const {
  std::size_t digits = std::max<std::size_t>(1, (width_ + 3) / 4);
  std::string out(digits, '0');
  for (std::size_t d = 0; d < digits; ++d) {
    std::size_t bit = d * 4;
    unsigned nibble = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      if (test(SourceId(bit + b))) nibble |= 1U << b;
    }
    out[digits - 1 - d] = "0123456789abcdef"[nibble];
  }
  return out;
}

CellSignature CellSignature::from_hex(std::string_view hex, std::size_t width) {
  CellSignature sig(width);
  std::size_t n = hex.size();
  for (std::size_t d = 0; d < n; ++d) {
    int v = hex_digit(hex[n - 1 - d]);
    if (v < 0) throw Error("invalid hex digit in cell signature");
    for (std::size_t b = 0; b < 4; ++b) {
      if (v & (1 << b)) {
        std::size_t bit = d * 4 + b;
        if (bit >= width) throw Error("cell signature wider than lattice");
        sig.set(SourceId(bit));
      }
    }
  }
  return sig;
}

std::size_t CellSignature::hash() const {
  std::size_t h = width_;
  for (auto w : words_) h ^= std::hash<std::uint64_t>{}(w) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

std::strong_ordering operator<=>(const CellSignature& a, const CellSignature& b) {
  if (auto c = a.width_ <=> b.width_; c != 0) return c;
  for (std::size_t i = a.words_.size(); i-- > 0;) {
    if (auto c = a.words_[i] <=> b.words_[i]; c != 0) return c;
  }
  return std::strong_ordering::equal;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::detected: return "detected";
    case Provenance::maxent_estimated: return "maxent-estimated";
    case Provenance::pruned_zero: return "pruned-zero";
  }
  return "?";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "detected") return Provenance::detected;
  if (text == "maxent-estimated") return Provenance::maxent_estimated;
  if (text == "pruned-zero") return Provenance::pruned_zero;
  throw Error("unknown provenance: " + std::string(text));
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::initial: return "initial";
    case Stage::online_substage_1: return "online-substage-1";
    case Stage::online_substage_2: return "online-substage-2";
    case Stage::final: return "final";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  if (text == "initial") return Stage::initial;
  if (text == "online-substage-1") return Stage::online_substage_1;
  if (text == "online-substage-2") return Stage::online_substage_2;
  if (text == "final") return Stage::final;
  throw Error("unknown stage: " + std::string(text));
}

SourceProfile StatsSnapshot::profile(SourceId s) const {
  const auto& st = sources.at(s.index);
  return SourceProfile{s, st.access_time_ms, st.per_tuple_ms, st.cardinality};
}

double StatsSnapshot::total_cell_mass() const {
  double total = 0.0;
  for (const auto& [sig, cell] : cells) total += cell.effective_value();
  return total;
}

std::vector<double> StatsSnapshot::constraint_residuals() const {
  std::vector<double> sums(sources.size(), 0.0);
  for (const auto& [sig, cell] : cells) {
    double v = cell.effective_value();
    if (v == 0.0) continue;
    for (auto m : sig.members()) sums[m.index] += v;
  }
  for (std::size_t i = 0; i < sums.size(); ++i) sums[i] = std::abs(sums[i] - sources[i].cardinality);
  return sums;
}

std::vector<CellSignature> parents(const CellSignature& sig) {
  std::vector<CellSignature> out;
  if (sig.level() < 2) return out;
  for (auto m : sig.members()) {
    CellSignature p = sig;
    p.reset(m);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<CellSignature> ancestor_constraint_cells(SourceId source, const StatsSnapshot& snapshot) {
  std::vector<CellSignature> out;
  for (const auto& [sig, cell] : snapshot.cells) {
    if (cell.provenance != Provenance::pruned_zero && sig.test(source)) out.push_back(sig);
  }
  return out;
}

double intersect_count(std::span<const SourceId> prefix, SourceId target,
                       const StatsSnapshot& snapshot) {
  if (prefix.empty()) return 0.0;
  auto prefix_sig = CellSignature::from_members(snapshot.width(), prefix);
  double total = 0.0;
  for (const auto& [sig, cell] : snapshot.cells) {
    if (sig.test(target) && sig.intersects(prefix_sig)) total += cell.effective_value();
  }
  return total;
}

double pairwise_intersection(SourceId a, SourceId b, const StatsSnapshot& snapshot) {
  double total = 0.0;
  for (const auto& [sig, cell] : snapshot.cells) {
    if (sig.test(a) && sig.test(b)) total += cell.effective_value();
  }
  return total;
}

namespace {
std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void write_snapshot(std::ostream& out, const StatsSnapshot& snapshot) {
  out << "# srcperm stats v1\n";
  out << "version " << snapshot.version << '\n';
  out << "stage " << to_string(snapshot.stage) << '\n';
  out << "l " << snapshot.width() << '\n';
  out << "theta_sc " << format_double(snapshot.theta_sc) << '\n';
  for (std::size_t i = 0; i < snapshot.sources.size(); ++i) {
    const auto& s = snapshot.sources[i];
    out << "source " << i << ' ' << format_double(s.access_time_ms) << ' '
        << format_double(s.per_tuple_ms) << ' ' << format_double(s.cardinality) << ' '
        << (s.detected ? 1 : 0) << ' ' << (s.available ? 1 : 0) << '\n';
  }
  out << "cells " << snapshot.cells.size() << '\n';
  for (const auto& [sig, cell] : snapshot.cells) {
    out << sig.to_hex() << ' ' << format_double(cell.value) << ' ' << to_string(cell.provenance)
        << '\n';
  }
}

StatsSnapshot read_snapshot(std::istream& in) {
  StatsSnapshot snap;
  std::string line;
  std::size_t width = 0;
  bool in_cells = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (in_cells) {
      std::string hex, prov;
      double value = 0;
      if (!(ls >> hex >> value >> prov)) throw Error("malformed cell line: " + line);
      auto sig = CellSignature::from_hex(hex, width);
      snap.cells[sig] = LatticeCell{sig, value, parse_provenance(prov)};
      continue;
    }
    std::string key;
    ls >> key;
    if (key == "version") {
      ls >> snap.version;
    } else if (key == "stage") {
      std::string s;
      ls >> s;
      snap.stage = parse_stage(s);
    } else if (key == "l") {
      ls >> width;
      snap.sources.assign(width, SourceStats{});
    } else if (key == "theta_sc") {
      ls >> snap.theta_sc;
    } else if (key == "source") {
      std::size_t id = 0;
      int detected = 0, available = 1;
      SourceStats st;
      ls >> id >> st.access_time_ms >> st.per_tuple_ms >> st.cardinality >> detected >> available;
      if (!ls || id >= width) throw Error("malformed source line: " + line);
      st.detected = detected != 0;
      st.available = available != 0;
      snap.sources[id] = st;
    } else if (key == "cells") {
      in_cells = true;
    } else {
      throw Error("unknown header line: " + line);
    }
  }
  return snap;
}

}  // namespace srcperm
