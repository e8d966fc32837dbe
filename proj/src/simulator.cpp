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

#include "srcperm/simulator.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

namespace srcperm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool sampled(std::uint64_t seed, std::uint32_t tuple, double rate) {
  if (rate >= 1.0) return true;
  double u = static_cast<double>(splitmix64(seed ^ (0x5851f42d4c957f2dULL * (tuple + 1))) >> 11) *
             0x1.0p-53;
  return u < rate;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void UniverseConfig::validate() const {
  if (n_sources == 0) throw Error("universe needs at least one source");
  if (latency.ta_min_ms < 0.0 || latency.ta_max_ms < latency.ta_min_ms) {
    throw Error("invalid access-time range");
  }
  if (latency.tr_min_ms <= 0.0 || latency.tr_max_ms < latency.tr_min_ms) {
    throw Error("invalid per-tuple range");
  }
  if (!(query_split > 0.0 && query_split <= 1.0)) throw Error("query split must lie in (0, 1]");
  if (detection_cost_ms < 0.0 || overhead_factor < 0.0) throw Error("negative detection cost");
  for (auto s : unavailable) {
    if (s.index >= n_sources) throw Error("unavailable source out of range");
  }
  if (overlap == OverlapModel::venn_explicit) {
    std::size_t sum = 0;
    for (const auto& [sig, n] : venn_cells) {
      if (sig.width() != n_sources) throw Error("venn cell width does not match source count");
      if (sig.empty()) throw Error("venn cell with no member source");
      sum += n;
    }
    if (n_distinct_tuples != 0 && sum > n_distinct_tuples) {
      throw Error("venn cells exceed the distinct tuple count");
    }
    auto check = [&](const std::vector<double>& v, bool positive) {
      if (!v.empty() && v.size() != n_sources) throw Error("per-source latency list has wrong size");
      for (double x : v) {
        if (positive ? x <= 0.0 : x < 0.0) throw Error("invalid per-source latency");
      }
    };
    check(venn_ta_ms, false);
    check(venn_tr_ms, true);
    return;
  }
  if (total_tuples < n_distinct_tuples) throw Error("total tuples below distinct tuples");
  if (replication == ReplicationModel::constant) {
    if (constant_replication == 0 || constant_replication > n_sources) {
      throw Error("constant replication must lie in [1, n_sources]");
    }
  } else if (total_tuples > n_distinct_tuples * n_sources) {
    throw Error("total tuples exceed full replication");
  }
}

void EventClock::advance(double ms) {
  if (ms < 0.0) throw Error("clock cannot run backwards");
  now_ += ms;
}

void EventClock::advance_to(double t_ms) { now_ = std::max(now_, t_ms); }

bool Universe::matches(std::uint32_t tuple, Predicate p) const {
  return p == Predicate::all || in_query_.at(tuple);
}

std::size_t Universe::distinct_count(Predicate p) const {
  if (p == Predicate::all) return membership_.size();
  return static_cast<std::size_t>(std::count(in_query_.begin(), in_query_.end(), 1));
}

std::size_t Universe::cardinality(SourceId s, Predicate p) const {
  return static_cast<std::size_t>((p == Predicate::all ? all_ : query_).cardinality.at(s.index));
}

const std::unordered_map<CellSignature, double>& Universe::lattice(Predicate p) const {
  return (p == Predicate::all ? all_ : query_).cells;
}

void Universe::build_counts() {
  const std::size_t l = ta_.size();
  all_.cardinality.assign(l, 0.0);
  query_.cardinality.assign(l, 0.0);
  for (std::uint32_t t = 0; t < membership_.size(); ++t) {
    all_.cells[membership_[t]] += 1.0;
    if (in_query_[t]) query_.cells[membership_[t]] += 1.0;
  }
  for (std::size_t s = 0; s < l; ++s) {
    all_.cardinality[s] = static_cast<double>(tuples_[s].size());
    double q = 0.0;
    for (auto t : tuples_[s]) q += in_query_[t];
    query_.cardinality[s] = q;
  }
}

const Universe::Counts& Universe::counts(Predicate p, double sample_rate) const {
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) throw Error("sample rate must lie in (0, 1]");
  if (sample_rate >= 1.0) return p == Predicate::all ? all_ : query_;
  std::lock_guard lock(samples_->mu);
  auto& slot = (p == Predicate::all ? samples_->all : samples_->query)[sample_rate];
  if (!slot) {
    auto c = std::make_unique<Counts>();
    c->cardinality.assign(ta_.size(), 0.0);
    for (std::uint32_t t = 0; t < membership_.size(); ++t) {
      if (!matches(t, p) || !sampled(seed_, t, sample_rate)) continue;
      c->cells[membership_[t]] += 1.0;
      for (auto m : membership_[t].members()) c->cardinality[m.index] += 1.0;
    }
    slot = std::move(c);
  }
  return *slot;
}

double Universe::count_source(SourceId s, Predicate p, double sample_rate) const {
  if (s.index >= ta_.size()) throw Error("source out of range");
  if (unavailable_[s.index]) throw SourceUnavailable(s);
  return counts(p, sample_rate).cardinality[s.index];
}

double Universe::count_cell(const CellSignature& cell, Predicate p, double sample_rate) const {
  if (cell.width() != ta_.size()) throw Error("cell width does not match universe");
  const auto& cells = counts(p, sample_rate).cells;
  auto it = cells.find(cell);
  return it == cells.end() ? 0.0 : it->second;
}

StatsSnapshot Universe::ground_truth_snapshot(Predicate p) const {
  const auto& c = p == Predicate::all ? all_ : query_;
  StatsSnapshot snap;
  snap.version = 1;
  snap.stage = Stage::final;
  snap.sources.resize(ta_.size());
  for (std::size_t s = 0; s < ta_.size(); ++s) {
    auto& st = snap.sources[s];
    st.access_time_ms = ta_[s];
    st.per_tuple_ms = tr_[s];
    st.cardinality = c.cardinality[s];
    st.detected = true;
    st.available = !unavailable_[s];
  }
  for (const auto& [sig, v] : c.cells) {
    snap.cells.emplace(sig, LatticeCell{sig, v, Provenance::detected});
  }
  return snap;
}

Universe generate(const UniverseConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t l = config.n_sources;
  std::mt19937_64 rng(seed);
  Universe u;
  u.config_ = config;
  u.seed_ = seed;
  u.ta_.resize(l);
  u.tr_.resize(l);
  for (std::size_t s = 0; s < l; ++s) {
    u.ta_[s] = uniform(rng, config.latency.ta_min_ms, config.latency.ta_max_ms);
    u.tr_[s] = uniform(rng, config.latency.tr_min_ms, config.latency.tr_max_ms);
  }
  u.unavailable_.assign(l, 0);
  for (auto s : config.unavailable) u.unavailable_[s.index] = 1;

  if (config.overlap == OverlapModel::venn_explicit) {
    if (!config.venn_ta_ms.empty()) u.ta_ = config.venn_ta_ms;
    if (!config.venn_tr_ms.empty()) u.tr_ = config.venn_tr_ms;
    for (const auto& [sig, n] : config.venn_cells) {
      for (std::size_t i = 0; i < n; ++i) u.membership_.push_back(sig);
    }
  } else {
    const std::size_t n = config.n_distinct_tuples;

    // Sources fall into clusters of neighbours that replicas prefer.
    std::vector<std::uint32_t> shuffled(l);
    std::iota(shuffled.begin(), shuffled.end(), 0u);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::size_t cluster = std::max<std::size_t>(1, config.cluster_size);

    std::vector<double> weight(l);
    for (auto& w : weight) w = uniform(rng, 1.0 - config.size_spread, 1.0 + config.size_spread);
    std::discrete_distribution<std::uint32_t> home(weight.begin(), weight.end());
    std::bernoulli_distribution skip(std::clamp(config.neighbour_skip, 0.0, 1.0));

    // One more replica: a cluster mate of the home unless skipped, otherwise
    // any source, drawn by popularity. Returns the new holder.
    std::vector<std::uint32_t> cluster_of(l);
    for (std::size_t pos = 0; pos < l; ++pos) cluster_of[shuffled[pos]] = static_cast<std::uint32_t>(pos / cluster);
    std::vector<std::uint32_t> pool;
    std::vector<double> pool_weight;
    auto draw = [&](const CellSignature& sig, std::uint32_t h, bool near) -> std::optional<SourceId> {
      pool.clear();
      pool_weight.clear();
      for (std::uint32_t s = 0; s < l; ++s) {
        if (sig.test(SourceId(s)) || (near && cluster_of[s] != cluster_of[h])) continue;
        pool.push_back(s);
        pool_weight.push_back(weight[s]);
      }
      if (pool.empty()) return std::nullopt;
      std::discrete_distribution<std::size_t> d(pool_weight.begin(), pool_weight.end());
      return SourceId(pool[d(rng)]);
    };
    auto extend = [&](CellSignature& sig, std::uint32_t h) -> std::optional<SourceId> {
      auto s = skip(rng) ? std::nullopt : draw(sig, h, true);
      if (!s) s = draw(sig, h, false);
      if (s) sig.set(*s);
      return s;
    };

    std::vector<std::uint32_t> homes(n);
    std::size_t sum = 0;
    u.membership_.reserve(n);
    if (config.replication == ReplicationModel::copying) {
      // Each tuple is fresh at its home source or a copy of an earlier tuple
      // from the same home carried one source further, so every cell has a
      // populated parent.
      std::vector<std::optional<std::size_t>> parent(n);
      std::vector<std::size_t> children(n, 0);
      std::vector<std::vector<std::size_t>> by_home(l);
      for (std::size_t t = 0; t < n; ++t) {
        homes[t] = home(rng);
        auto& family = by_home[homes[t]];
        // Aim for a depth whose mean spreads the replicas still owed evenly
        // over the tuples still to come, then copy the deepest family member
        // short of it.
        double owed = (static_cast<double>(config.total_tuples) - static_cast<double>(sum)) /
                      static_cast<double>(n - t);
        std::size_t want =
            1 + std::geometric_distribution<std::size_t>(1.0 / std::max(1.0, owed))(rng);
        std::optional<std::size_t> from;
        for (auto f : family) {
          auto d = u.membership_[f].level();
          if (d < want && (!from || d > u.membership_[*from].level())) from = f;
        }
        CellSignature sig(l);
        if (!from) {
          sig.set(SourceId(homes[t]));
        } else {
          sig = u.membership_[*from];
          if (extend(sig, homes[t])) {
            parent[t] = from;
            ++children[*from];
          }
        }
        family.push_back(t);
        sum += sig.level();
        u.membership_.push_back(std::move(sig));
      }
      // Re-parent copy-tree leaves one level up or down. Nothing was copied
      // from a leaf, so the cell it leaves needs no other holder.
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      std::vector<std::size_t> candidates;
      for (std::size_t tries = 0; sum != config.total_tuples && tries < 200 * n; ++tries) {
        auto t = pick(rng);
        if (children[t] > 0) continue;
        std::size_t level = u.membership_[t].level();
        bool up = sum < config.total_tuples;
        if (!up && level < 2) continue;
        std::size_t target = up ? level : level - 2;
        CellSignature next(l);
        std::optional<std::size_t> from;
        if (target == 0) {
          next.set(SourceId(homes[t]));
        } else {
          candidates.clear();
          for (auto f : by_home[homes[t]]) {
            if (f != t && u.membership_[f].level() == target) candidates.push_back(f);
          }
          if (candidates.empty()) continue;
          from = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
          next = u.membership_[*from];
          if (!extend(next, homes[t])) continue;
        }
        if (parent[t]) --children[*parent[t]];
        parent[t] = from;
        if (from) ++children[*from];
        sum = sum + next.level() - level;
        u.membership_[t] = std::move(next);
      }
    } else {
      std::vector<std::size_t> copies(n, 1);
      if (config.replication == ReplicationModel::constant) {
        std::fill(copies.begin(), copies.end(), config.constant_replication);
      }
      for (std::size_t t = 0; t < n; ++t) {
        homes[t] = home(rng);
        CellSignature sig(l, {homes[t]});
        for (std::size_t placed = 1; placed < copies[t]; ++placed) extend(sig, homes[t]);
        sum += sig.level();
        u.membership_.push_back(std::move(sig));
      }
    }

    // Unconstrained single-replica corrections for whatever is left.
    if (config.replication != ReplicationModel::constant && n > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      while (sum < config.total_tuples) {
        auto t = pick(rng);
        if (extend(u.membership_[t], homes[t])) ++sum;
      }
      while (sum > config.total_tuples) {
        auto t = pick(rng);
        auto members = u.membership_[t].members();
        if (members.size() <= 1) continue;
        std::vector<SourceId> others;
        for (auto m : members) {
          if (m.index != homes[t]) others.push_back(m);
        }
        u.membership_[t].reset(others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)]);
        --sum;
      }
    }
  }

  const std::size_t n = u.membership_.size();
  u.tuples_.assign(l, {});
  for (std::uint32_t t = 0; t < n; ++t) {
    for (auto m : u.membership_[t].members()) u.tuples_[m.index].push_back(t);
  }
  for (auto& list : u.tuples_) std::shuffle(list.begin(), list.end(), rng);

  u.in_query_.assign(n, 0);
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto chosen = static_cast<std::size_t>(std::llround(config.query_split * static_cast<double>(n)));
  for (std::size_t i = 0; i < std::min(chosen, n); ++i) u.in_query_[ids[i]] = 1;

  u.build_counts();
  return u;
}

UniverseConfig example1_config() {
  UniverseConfig c;
  c.n_sources = 3;
  c.n_distinct_tuples = 200;
  c.total_tuples = 250;
  c.overlap = OverlapModel::venn_explicit;
  c.venn_cells = {
      {CellSignature(3, {0}), 10},    {CellSignature(3, {1}), 80},
      {CellSignature(3, {2}), 60},    {CellSignature(3, {0, 1}), 35},
      {CellSignature(3, {0, 2}), 5},  {CellSignature(3, {1, 2}), 10},
  };
  c.venn_ta_ms = {0.0, 0.0, 0.0};
  c.venn_tr_ms = {0.7, 1.1, 1.5};
  c.query_split = 1.0;
  return c;
}

Universe example1_universe() { return generate(example1_config(), 1); }

TupleStream answer_tuple_query(const Universe& u, SourceId s, Predicate p, double start_ms) {
  TupleStream out;
  out.source = s;
  out.start_ms = start_ms;
  out.access_time_ms = u.access_time_ms(s);
  out.per_tuple_ms = u.per_tuple_ms(s);
  if (!u.available(s)) {
    out.failed = true;
    return out;
  }
  for (auto t : u.tuples(s)) {
    if (u.matches(t, p)) out.tuples.push_back(t);
  }
  return out;
}

double answer_count_query(const Universe& u, SourceId s, Predicate p, EventClock& clock) {
  double n = u.count_source(s, p);
  clock.advance(u.detection_cost_ms());
  return n;
}

double answer_count_query(const Universe& u, const CellSignature& cell, Predicate p,
                          EventClock& clock) {
  double n = u.count_cell(cell, p);
  clock.advance(u.detection_cost_ms());
  return n;
}

}  // namespace srcperm
