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

#include "srcperm/permutation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace srcperm {

namespace {

constexpr const char* kAlgoNames[] = {"Random",     "MaxT",          "MaxRT",     "MinT",
                                      "MinRT",      "GreedyQR",      "SeqPerm",   "OnlinePerm",
                                      "FullKnowledge", "BruteForce"};

void insert_sorted(std::vector<SourceId>& v, SourceId s) {
  v.insert(std::lower_bound(v.begin(), v.end(), s), s);
}

bool erase_sorted(std::vector<SourceId>& v, SourceId s) {
  auto it = std::lower_bound(v.begin(), v.end(), s);
  if (it == v.end() || *it != s) return false;
  v.erase(it);
  return true;
}

// n_sum and v_avg of `order` under `index`.
std::pair<double, double> totals(std::span<const SourceId> order, const OverlapIndex& index) {
  OverlapIndex::Coverage cov(index);
  double n = 0.0, cost = 0.0;
  for (auto s : order) {
    n += cov.residual(s);
    cost += index.full_cost(s);
    cov.add(s);
  }
  return {n, cost > 0.0 ? n / cost : 0.0};
}

PermCandidate make_candidate(PermState perm, std::size_t k, const OverlapIndex& index) {
  auto [n, v] = totals(perm.order, index);
  return PermCandidate{std::move(perm), n, v, n < static_cast<double>(k)};
}

}  // namespace

std::string_view to_string(AlgoKind kind) { return kAlgoNames[static_cast<int>(kind)]; }

AlgoKind parse_algo(std::string_view name) {
  for (int i = 0; i < static_cast<int>(std::size(kAlgoNames)); ++i) {
    if (name == kAlgoNames[i]) return static_cast<AlgoKind>(i);
  }
  throw Error("unknown algorithm: " + std::string(name));
}

OverlapIndex::OverlapIndex(const StatsSnapshot& snapshot) {
  const std::size_t l = snapshot.width();
  cardinality_.resize(l);
  full_cost_.resize(l);
  ta_.resize(l);
  tr_.resize(l);
  for (std::size_t s = 0; s < l; ++s) {
    const auto& st = snapshot.sources[s];
    cardinality_[s] = std::max(0.0, st.cardinality);
    ta_[s] = st.access_time_ms;
    tr_[s] = st.per_tuple_ms;
    full_cost_[s] = st.access_time_ms + st.per_tuple_ms * cardinality_[s];
  }
  source_cells_.resize(l);
  pairwise_.assign(l * l, 0.0);
  for (const auto& [sig, cell] : snapshot.cells) {
    double v = cell.effective_value();
    if (v <= 0.0) continue;
    auto id = static_cast<std::uint32_t>(cell_value_.size());
    std::vector<std::uint32_t> members;
    for (auto m : sig.members()) members.push_back(m.index);
    for (auto a : members) {
      source_cells_[a].push_back(id);
      for (auto b : members) pairwise_[a * l + b] += v;
    }
    cell_value_.push_back(v);
    cell_members_.push_back(std::move(members));
  }
}

SourceProfile OverlapIndex::profile(SourceId s) const {
  return SourceProfile{s, ta_[s.index], tr_[s.index], cardinality_[s.index]};
}

OverlapIndex::Coverage::Coverage(const OverlapIndex& index)
    : index_(&index), covered_(index.cell_value_.size(), 0), insec_(index.width(), 0.0) {}

void OverlapIndex::Coverage::add(SourceId s) {
  for (auto c : index_->source_cells_[s.index]) {
    if (covered_[c]) continue;
    covered_[c] = 1;
    double v = index_->cell_value_[c];
    for (auto m : index_->cell_members_[c]) insec_[m] += v;
  }
}

double OverlapIndex::Coverage::residual(SourceId s) const {
  return std::max(0.0, index_->cardinality(s) - insec_[s.index]);
}

double OverlapIndex::Coverage::rate(SourceId s) const {
  return query_rate(index_->profile(s), insec_[s.index]);
}

std::map<SourceId, double> insec(const PermState& perm, std::span<const SourceId> unselected,
                                 const StatsSnapshot& snapshot) {
  OverlapIndex index(snapshot);
  OverlapIndex::Coverage cov(index);
  for (auto s : perm.order) cov.add(s);
  std::map<SourceId, double> out;
  for (auto s : unselected) out[s] = std::min(cov.insec(s), index.cardinality(s));
  return out;
}

double counter(const PermState& perm, const OverlapIndex& index) {
  return totals(perm.order, index).first;
}

double counter(const PermState& perm, const StatsSnapshot& snapshot) {
  return counter(perm, OverlapIndex(snapshot));
}

PermCandidate perm2set(PermState perm, std::size_t k, const OverlapIndex& index) {
  OverlapIndex::Coverage cov(index);
  double cum = 0.0;
  std::size_t keep = perm.order.size();
  for (std::size_t i = 0; i < perm.order.size(); ++i) {
    cum += cov.residual(perm.order[i]);
    cov.add(perm.order[i]);
    if (cum >= static_cast<double>(k)) {
      keep = i + 1;
      break;
    }
  }
  keep = std::max(keep, perm.pinned_prefix);
  for (std::size_t i = keep; i < perm.order.size(); ++i) insert_sorted(perm.unselected, perm.order[i]);
  perm.order.resize(keep);
  return make_candidate(std::move(perm), k, index);
}

void set2perm(PermState& perm, SourceId s) {
  if (!erase_sorted(perm.unselected, s)) throw Error("source is not unselected");
  perm.order.push_back(s);
}

void swap(PermState& perm, SourceId si, SourceId sj) {
  auto it = std::find(perm.order.begin(), perm.order.end(), si);
  if (it == perm.order.end()) throw Error("source is not in the permutation");
  auto pos = static_cast<std::size_t>(it - perm.order.begin());
  if (pos < perm.pinned_prefix) throw PinnedError();
  auto behind = std::find(perm.order.begin() + pos + 1, perm.order.end(), sj);
  if (behind == perm.order.end() && !std::binary_search(perm.unselected.begin(),
                                                        perm.unselected.end(), sj)) {
    throw Error("swap target is neither unselected nor behind the anchor");
  }
  for (std::size_t i = pos; i < perm.order.size(); ++i) insert_sorted(perm.unselected, perm.order[i]);
  perm.order.resize(pos);
  erase_sorted(perm.unselected, sj);
  perm.order.push_back(sj);
}

std::vector<std::pair<SourceId, double>> sort_candidates(SourceId anchor,
                                                         std::span<const SourceId> pool,
                                                         const OverlapIndex& index,
                                                         double theta_sp, bool reduced) {
  std::vector<std::pair<SourceId, double>> out;
  double card = index.cardinality(anchor);
  if (card <= 0.0) return out;
  for (auto s : pool) {
    if (s == anchor) continue;
    double ratio = index.pairwise(anchor, s) / card;
    if (ratio < theta_sp) continue;
    out.emplace_back(s, ratio);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (reduced && !out.empty()) {
    double top = out.front().second;
    std::erase_if(out, [&](const auto& e) { return e.second < top; });
  }
  return out;
}

PermCandidate greedy_qr(const QuerySpec& query, PermState perm, const OverlapIndex& index,
                        WorkMeter* work) {
  const double k = static_cast<double>(query.k);
  OverlapIndex::Coverage cov(index);
  double n_sum = 0.0;
  for (auto s : perm.order) {
    n_sum += cov.residual(s);
    cov.add(s);
  }
  if (n_sum >= k) return perm2set(std::move(perm), query.k, index);

  while (n_sum < k) {
    double v_max = 0.0;
    std::optional<SourceId> pick;
    for (auto s : perm.unselected) {
      double v = cov.rate(s);
      if (v > v_max) {
        v_max = v;
        pick = s;
      }
    }
    if (work) work->units += perm.unselected.size();
    if (!pick) break;
    n_sum += cov.residual(*pick);
    cov.add(*pick);
    set2perm(perm, *pick);
  }
  return make_candidate(std::move(perm), query.k, index);
}

PermCandidate greedy_qr(const QuerySpec& query, PermState perm, const StatsSnapshot& snapshot) {
  return greedy_qr(query, std::move(perm), OverlapIndex(snapshot));
}

std::optional<PermCandidate> re_perm(SourceId anchor, const QuerySpec& query, const PermState& perm,
                                     double v_avg, const OverlapIndex& index, double theta_sp,
                                     bool reduced, WorkMeter* work) {
  auto it = std::find(perm.order.begin(), perm.order.end(), anchor);
  if (it == perm.order.end()) throw Error("anchor is not in the permutation");
  auto pos = static_cast<std::size_t>(it - perm.order.begin());
  if (pos < perm.pinned_prefix) throw PinnedError();

  std::vector<SourceId> pool(perm.unselected);
  pool.insert(pool.end(), perm.order.begin() + pos + 1, perm.order.end());
  std::sort(pool.begin(), pool.end());
  auto candidates = sort_candidates(anchor, pool, index, theta_sp, reduced);
  const bool incumbent_covers = counter(perm, index) >= static_cast<double>(query.k);

  std::optional<PermCandidate> best;
  double best_v = 0.0;
  for (const auto& [sj, ratio] : candidates) {
    if (work) ++work->units;
    if (!(index.cardinality(anchor) < index.cardinality(sj))) continue;
    PermState trial = perm;
    swap(trial, anchor, sj);
    auto cand = greedy_qr(query, std::move(trial), index, work);
    if (cand.shortfall && incumbent_covers) continue;
    if (cand.v_avg > best_v) {
      best_v = cand.v_avg;
      best = std::move(cand);
    }
  }
  if (best && best->v_avg > v_avg) return best;
  return std::nullopt;
}

PermCandidate online_perm(const QuerySpec& query, SnapshotPtr snapshot, const PermState& start,
                          const OnlinePermOptions& options, OnlinePermStats* stats) {
  if (!snapshot) throw Error("online_perm needs a snapshot");
  OnlinePermStats local;
  OnlinePermStats& st = stats ? *stats : local;
  WorkMeter work;
  auto index = std::make_unique<OverlapIndex>(*snapshot);

  PermState base;
  base.pinned_prefix = std::min(start.pinned_prefix, start.order.size());
  base.order.assign(start.order.begin(), start.order.begin() + base.pinned_prefix);
  for (std::size_t i = 0; i < snapshot->width(); ++i) {
    SourceId s(i);
    if (std::find(base.order.begin(), base.order.end(), s) == base.order.end()) {
      base.unselected.push_back(s);
    }
  }
  std::uint64_t version = start.version;
  auto publish = [&](PermCandidate& c) {
    c.perm.version = ++version;
    if (options.publish) options.publish(c.perm);
  };

  PermCandidate cur = greedy_qr(query, base, *index, &work);
  publish(cur);
  std::size_t i = cur.perm.pinned_prefix;
  while (i < cur.perm.order.size()) {
    if (options.stop && options.stop->raised()) break;
    if (options.latest_snapshot) {
      auto latest = options.latest_snapshot();
      if (latest && latest->version != snapshot->version) {
        snapshot = std::move(latest);
        index = std::make_unique<OverlapIndex>(*snapshot);
        cur = greedy_qr(query, cur.perm, *index, &work);
        publish(cur);
        ++st.restarts;
        i = cur.perm.pinned_prefix;
        continue;
      }
    }
    ++st.reperm_calls;
    auto next = re_perm(cur.perm.order[i], query, cur.perm, cur.v_avg, *index, options.theta_sp,
                        options.reduced, &work);
    if (next && next->v_avg > cur.v_avg) {
      cur = std::move(*next);
      ++st.improvements;
      publish(cur);
    }
    ++i;
  }
  st.work_units += work.units;
  return cur;
}

PermCandidate online_perm(const QuerySpec& query, SnapshotPtr snapshot, SharedSlot<PermState>& store,
                          OnlinePermOptions options, OnlinePermStats* stats) {
  auto current = store.read().value;
  PermState start = current ? *current : PermState::empty(snapshot ? snapshot->width() : 0);
  auto user = std::move(options.publish);
  options.publish = [&store, user](const PermState& p) {
    store.write(p);
    if (user) user(p);
  };
  return online_perm(query, std::move(snapshot), start, options, stats);
}

std::vector<SourceId> baseline_order(AlgoKind kind, const StatsSnapshot& snapshot,
                                     std::uint64_t seed) {
  const std::size_t l = snapshot.width();
  OverlapIndex index(snapshot);
  std::vector<SourceId> order(l);
  for (std::size_t i = 0; i < l; ++i) order[i] = SourceId(i);

  auto per_tuple = [&](SourceId s) {
    double c = index.cardinality(s);
    return c > 0.0 ? index.full_cost(s) / c : std::numeric_limits<double>::infinity();
  };

  switch (kind) {
    case AlgoKind::Random: {
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      return order;
    }
    case AlgoKind::MaxT:
      std::stable_sort(order.begin(), order.end(), [&](SourceId a, SourceId b) {
        return index.cardinality(a) > index.cardinality(b);
      });
      return order;
    case AlgoKind::MinT:
      std::stable_sort(order.begin(), order.end(),
                       [&](SourceId a, SourceId b) { return per_tuple(a) < per_tuple(b); });
      return order;
    case AlgoKind::MaxRT:
    case AlgoKind::MinRT: {
      OverlapIndex::Coverage cov(index);
      std::vector<SourceId> left = order, out;
      while (!left.empty()) {
        std::size_t pick = left.size();
        double best = 0.0;
        for (std::size_t j = 0; j < left.size(); ++j) {
          double key = kind == AlgoKind::MaxRT ? cov.residual(left[j]) : cov.rate(left[j]);
          if (key > best) {
            best = key;
            pick = j;
          }
        }
        if (pick == left.size()) break;
        out.push_back(left[pick]);
        cov.add(left[pick]);
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      out.insert(out.end(), left.begin(), left.end());
      return out;
    }
    default:
      throw Error("not a baseline: " + std::string(to_string(kind)));
  }
}

PermCandidate baseline(AlgoKind kind, const QuerySpec& query, const StatsSnapshot& snapshot,
                       std::uint64_t seed) {
  OverlapIndex index(snapshot);
  if (kind == AlgoKind::GreedyQR) {
    return greedy_qr(query, PermState::empty(snapshot.width()), index);
  }
  PermState perm;
  perm.order = baseline_order(kind, snapshot, seed);
  auto out = perm2set(std::move(perm), query.k, index);
  if (out.shortfall) {
    // Keep only sources that still contribute, in baseline order.
    OverlapIndex::Coverage cov(index);
    PermState trimmed;
    for (auto s : out.perm.order) {
      if (cov.residual(s) > 0.0) {
        trimmed.order.push_back(s);
        cov.add(s);
      } else {
        trimmed.unselected.push_back(s);
      }
    }
    std::sort(trimmed.unselected.begin(), trimmed.unselected.end());
    out = make_candidate(std::move(trimmed), query.k, index);
  }
  return out;
}

OracleResult brute_force_opt(const QuerySpec& query, const StatsSnapshot& snapshot,
                             CostSemantics semantics, std::size_t max_sources) {
  const std::size_t l = snapshot.width();
  if (l > std::min(max_sources, kOracleMaxSources) || l > 16) throw Error("oracle size bound");
  const std::size_t masks = std::size_t{1} << l;

  std::vector<std::pair<std::uint32_t, double>> cells;
  double reachable = 0.0;
  for (const auto& [sig, cell] : snapshot.cells) {
    double v = cell.effective_value();
    if (v <= 0.0) continue;
    std::uint32_t m = 0;
    for (auto s : sig.members()) m |= 1u << s.index;
    cells.emplace_back(m, v);
    reachable += v;
  }
  std::vector<double> card(l), cost(l);
  for (std::size_t s = 0; s < l; ++s) {
    card[s] = std::max(0.0, snapshot.sources[s].cardinality);
    cost[s] = snapshot.sources[s].access_time_ms + snapshot.sources[s].per_tuple_ms * card[s];
  }
  if (cells.empty()) reachable = std::accumulate(card.begin(), card.end(), 0.0);
  std::vector<double> resid(masks * l);
  for (std::size_t mask = 0; mask < masks; ++mask) {
    for (std::size_t s = 0; s < l; ++s) {
      double inter = 0.0;
      for (const auto& [m, v] : cells) {
        if ((m >> s & 1u) && (m & mask)) inter += v;
      }
      resid[mask * l + s] = std::max(0.0, card[s] - inter);
    }
  }

  std::vector<std::uint32_t> seq, best_seq;
  double best = std::numeric_limits<double>::infinity();
  double target = 0.0;
  auto better = [&](double c) {
    return !std::isfinite(best) || c < best - 1e-9 * std::max(1.0, std::abs(best));
  };

  std::function<void(std::uint32_t, double, double)> dfs = [&](std::uint32_t mask, double cum,
                                                               double spent) {
    if (semantics == CostSemantics::marginal && !better(spent)) return;
    for (std::uint32_t s = 0; s < l; ++s) {
      if (mask >> s & 1u) continue;
      double r = resid[mask * l + s];
      if (r <= 0.0) continue;
      seq.push_back(s);
      if (cum + r >= target) {
        double c = semantics == CostSemantics::marginal ? spent + (target - cum) * cost[s] / r
                                                        : target * (spent + cost[s]) / (cum + r);
        if (better(c)) {
          best = c;
          best_seq = seq;
        }
      } else {
        dfs(mask | (1u << s), cum + r, spent + cost[s]);
      }
      seq.pop_back();
    }
  };

  // Short of k, aim for the whole union instead (D2).
  bool shortfall = static_cast<double>(query.k) > reachable;
  target = shortfall ? reachable : static_cast<double>(query.k);
  if (target > 0.0) dfs(0, 0.0, 0.0);

  OracleResult out;
  out.perm.order.reserve(best_seq.size());
  std::vector<char> used(l, 0);
  for (auto s : best_seq) {
    out.perm.order.push_back(SourceId(s));
    used[s] = 1;
  }
  for (std::size_t s = 0; s < l; ++s) {
    if (!used[s]) out.perm.unselected.push_back(SourceId(s));
  }
  auto steps = perm_steps(out.perm.order, snapshot);
  out.cost = time_cost(steps, static_cast<double>(query.k), semantics);
  return out;
}

double approx_bound(const QuerySpec& query, const StatsSnapshot& snapshot) {
  const std::size_t l = snapshot.width();
  if (l == 0) return 1.0;
  std::vector<SourceId> order(l);
  std::vector<double> card(l), cost(l), rate(l);
  double total_cost = 0.0, raw_total = 0.0;
  for (std::size_t s = 0; s < l; ++s) {
    order[s] = SourceId(s);
    card[s] = std::max(0.0, snapshot.sources[s].cardinality);
    cost[s] = snapshot.sources[s].access_time_ms + snapshot.sources[s].per_tuple_ms * card[s];
    rate[s] = cost[s] > 0.0 ? card[s] / cost[s] : 0.0;
    total_cost += cost[s];
    raw_total += card[s];
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](SourceId a, SourceId b) { return rate[a.index] > rate[b.index]; });
  const double k = static_cast<double>(query.k);
  double cum = 0.0, prefix_cost = 0.0;
  for (auto s : order) {
    cum += card[s.index];
    prefix_cost += cost[s.index];
    if (cum >= k) break;
  }
  double distinct = snapshot.cells.empty() ? raw_total : snapshot.total_cell_mass();
  double denom = distinct * prefix_cost;
  if (denom <= 0.0) return 1.0;
  return std::max(1.0, k * total_cost / denom);
}

}  // namespace srcperm
