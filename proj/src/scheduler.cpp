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

#include "srcperm/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>

#include <json.hpp>

namespace srcperm {

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

using Picker = std::function<std::optional<SourceId>(double now, const std::vector<SourceId>& dispatched,
                                                     const std::vector<char>& taken)>;

// Statistics Collection as seen by the event loop.
struct Collector {
  std::function<double()> next_time = [] { return kNever; };
  std::function<void()> step = [] {};
};

SnapshotPtr resolve_initial(const Universe& u, const RunConfig& config) {
  if (config.initial_snapshot) return config.initial_snapshot;
  return std::make_shared<const StatsSnapshot>(initial_detection(u, config.initial));
}

// Highest-rate undispatched source under `snap`, then the largest, then the
// lowest id. Used once a published order runs dry before k.
std::optional<SourceId> fallback_pick(const StatsSnapshot& snap, const std::vector<SourceId>& dispatched,
                                      const std::vector<char>& taken) {
  OverlapIndex index(snap);
  OverlapIndex::Coverage cov(index);
  for (auto s : dispatched) cov.add(s);
  std::optional<SourceId> best;
  double best_rate = 0.0, best_card = -1.0;
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (taken[i]) continue;
    SourceId s(i);
    double r = cov.rate(s);
    double c = index.cardinality(s);
    if (r > best_rate || (best_rate == 0.0 && r == 0.0 && c > best_card)) {
      best_rate = r;
      best_card = c;
      best = s;
    }
  }
  return best;
}

std::optional<SourceId> first_untaken(const std::vector<SourceId>& order, const std::vector<char>& taken) {
  for (auto s : order) {
    if (!taken[s.index]) return s;
  }
  return std::nullopt;
}

PermState pinned_state(const std::vector<SourceId>& dispatched, const std::vector<char>& taken) {
  PermState p;
  p.order = dispatched;
  p.pinned_prefix = dispatched.size();
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (!taken[i]) p.unselected.push_back(SourceId(i));
  }
  return p;
}

// Query Execution: `threads` workers pulling from a shared head.
void execute(const QuerySpec& query, const Universe& u, std::size_t thread_count, double start_ms,
             const Picker& pick, Collector& sc, RunResult& res) {
  struct Worker {
    enum class State { ready, busy, dead } state = State::ready;
    double ready_at = 0.0;
    TupleStream stream;
    std::size_t next = 0;
    std::size_t trace = 0;
  };
  const std::size_t l = u.source_count();
  std::vector<Worker> workers(std::max<std::size_t>(1, thread_count));
  for (auto& w : workers) w.ready_at = start_ms;
  std::vector<SourceId> dispatched;
  std::vector<char> taken(l, 0);
  std::vector<char> seen(u.tuple_count(), 0);

  auto event_time = [](const Worker& w) {
    switch (w.state) {
      case Worker::State::ready:
        return w.ready_at;
      case Worker::State::busy:
        return w.next < w.stream.tuples.size() ? w.stream.arrival_ms(w.next) : w.stream.completion_ms();
      default:
        return kNever;
    }
  };

  double now = start_ms;
  bool reached = false;
  while (true) {
    std::size_t wi = workers.size();
    double qe_t = kNever;
    for (std::size_t i = 0; i < workers.size(); ++i) {
      double t = event_time(workers[i]);
      if (t < qe_t) {
        qe_t = t;
        wi = i;
      }
    }
    if (wi == workers.size()) break;  // every worker is out of sources
    double sc_t = sc.next_time();
    if (sc_t <= qe_t) {
      sc.step();
      continue;
    }
    now = qe_t;
    auto& w = workers[wi];
    if (w.state == Worker::State::ready) {
      auto s = dispatched.size() < l ? pick(now, dispatched, taken) : std::nullopt;
      if (!s) {
        w.state = Worker::State::dead;
        continue;
      }
      taken[s->index] = 1;
      dispatched.push_back(*s);
      w.stream = answer_tuple_query(u, *s, query.predicate, now);
      w.next = 0;
      w.state = Worker::State::busy;
      w.trace = res.trace.size();
      res.trace.push_back(TraceEvent{*s, wi, now, now, 0, 0, w.stream.failed});
      continue;
    }
    auto& ev = res.trace[w.trace];
    if (w.next < w.stream.tuples.size()) {
      auto t = w.stream.tuples[w.next++];
      ++res.tuples_retrieved;
      if (!seen[t]) {
        seen[t] = 1;
        ++res.distinct_tuples;
        ++ev.new_tuples;
      } else {
        ++ev.duplicate_tuples;
      }
      ev.completion_ms = now;
      if (res.distinct_tuples >= query.k) {
        reached = true;
        break;
      }
      if (w.next < w.stream.tuples.size()) continue;
    }
    ev.completion_ms = now;
    w.state = Worker::State::ready;
    w.ready_at = now;
  }
  // In-flight transfers are cut at the stop signal.
  for (auto& w : workers) {
    if (w.state == Worker::State::busy) res.trace[w.trace].completion_ms = now;
  }
  res.query_time_ms = now;
  res.shortfall = !reached;
}

void finish(RunResult& res) {
  res.simulated_time_ms = res.query_time_ms + res.detection_time_ms;
}

RunResult run_with_order_source(AlgoKind algo, const QuerySpec& query, const Universe& u,
                                const RunConfig& config, SnapshotPtr plan,
                                std::vector<SourceId> order, double start_ms) {
  RunResult res;
  res.algo = algo;
  res.perm_versions = 1;
  Collector sc;
  Picker pick = [&](double, const std::vector<SourceId>& dispatched, const std::vector<char>& taken) {
    if (auto s = first_untaken(order, taken)) return s;
    return fallback_pick(*plan, dispatched, taken);
  };
  execute(query, u, config.query_threads, start_ms, pick, sc, res);
  finish(res);
  return res;
}

}  // namespace

SnapshotPtr initial_query_view(const StatsSnapshot& initial, const OnlineDetectionConfig& config) {
  auto snap = std::make_shared<StatsSnapshot>();
  snap->version = initial.version + 1;
  snap->stage = Stage::initial;
  snap->theta_sc = initial.theta_sc;
  snap->sources = initial.sources;
  for (auto& st : snap->sources) {
    st.cardinality *= config.prior_ratio;
    st.detected = false;
  }
  for (const auto& [sig, cell] : initial.cells) {
    double v = cell.effective_value();
    if (v <= 0.0) continue;
    snap->cells.emplace(sig, LatticeCell{sig, v * config.prior_ratio, Provenance::maxent_estimated});
  }
  return snap;
}

RunResult run_online(const QuerySpec& query, const Universe& universe, const RunConfig& config) {
  auto initial = resolve_initial(universe, config);
  auto view = initial_query_view(*initial, config.online);
  auto hint = baseline_order(AlgoKind::MinRT, *view);
  OnlineDetector detector(universe, query.predicate, initial, hint, config.online);
  const double unit = universe.detection_cost_ms();

  RunResult res;
  res.algo = AlgoKind::OnlinePerm;
  res.stats_versions = 1;

  double sc_clock = 0.0;
  Collector sc;
  sc.next_time = [&] {
    if (detector.done()) return kNever;
    return sc_clock + unit * static_cast<double>(detector.next_step_queries());
  };
  sc.step = [&] {
    sc_clock += unit * static_cast<double>(detector.next_step_queries());
    detector.step();
    ++res.stats_versions;
    res.detections = detector.detections();
    res.detection_time_ms = config.charge_detection ? sc_clock : 0.0;
  };

  std::uint64_t planned_version = 0;
  std::vector<SourceId> order;
  Picker pick = [&](double, const std::vector<SourceId>& dispatched, const std::vector<char>& taken) {
    auto snap = detector.current();
    if (snap->version != planned_version) {
      OnlinePermOptions opts;
      opts.theta_sp = config.theta_sp;
      opts.reduced = config.reduced_reperm;
      opts.publish = [&](const PermState&) { ++res.perm_versions; };
      OnlinePermStats st;
      auto cand = online_perm(query, snap, pinned_state(dispatched, taken), opts, &st);
      if (config.charge_sp_online) {
        res.perm_time_ms += static_cast<double>(st.work_units) * config.perm_ms_per_unit;
      }
      order = std::move(cand.perm.order);
      planned_version = snap->version;
    }
    if (auto s = first_untaken(order, taken)) return s;
    return fallback_pick(*snap, dispatched, taken);
  };
  execute(query, universe, config.query_threads, 0.0, pick, sc, res);
  finish(res);
  res.simulated_time_ms += res.perm_time_ms;
  return res;
}

RunResult run_full_knowledge(const QuerySpec& query, const Universe& universe,
                             const RunConfig& config) {
  auto truth = std::make_shared<const StatsSnapshot>(universe.ground_truth_snapshot(query.predicate));
  OnlinePermOptions opts;
  opts.theta_sp = config.theta_sp;
  opts.reduced = config.reduced_reperm;
  auto cand = online_perm(query, truth, PermState::empty(universe.source_count()), opts);
  return run_with_order_source(AlgoKind::FullKnowledge, query, universe, config, truth,
                               std::move(cand.perm.order), 0.0);
}

RunResult run_sequential(const QuerySpec& query, const Universe& universe, const RunConfig& config) {
  auto initial = resolve_initial(universe, config);
  auto view = initial_query_view(*initial, config.online);
  // The query cardinalities are counted before planning; cell detection is
  // left to the concurrent pipeline.
  OnlineDetector detector(universe, query.predicate, initial,
                          baseline_order(AlgoKind::MinRT, *view), config.online);
  double detect_ms = 0.0;
  for (std::size_t i = 0; i < universe.source_count() && !detector.done(); ++i) {
    detect_ms += universe.detection_cost_ms() * static_cast<double>(detector.next_step_queries());
    detector.step();
  }
  if (!config.charge_detection) detect_ms = 0.0;
  auto stats = detector.current();
  OnlinePermOptions opts;
  opts.theta_sp = config.theta_sp;
  opts.reduced = config.reduced_reperm;
  OnlinePermStats st;
  auto cand = online_perm(query, stats, PermState::empty(universe.source_count()), opts, &st);
  double perm_ms = static_cast<double>(st.work_units) * config.perm_ms_per_unit;
  auto res = run_with_order_source(AlgoKind::SeqPerm, query, universe, config, stats,
                                   std::move(cand.perm.order), detect_ms + perm_ms);
  // Both offsets already delay QE's start, so they are reported only.
  res.perm_time_ms = perm_ms;
  res.detection_time_ms = detect_ms;
  res.detections = detector.detections();
  res.perm_versions = 1 + st.improvements;
  return res;
}

RunResult run_baseline(AlgoKind kind, const QuerySpec& query, const Universe& universe,
                       const RunConfig& config) {
  auto view = initial_query_view(*resolve_initial(universe, config), config.online);
  std::vector<SourceId> order = kind == AlgoKind::GreedyQR
                                    ? greedy_qr(query, PermState::empty(view->width()), *view).perm.order
                                    : baseline_order(kind, *view, config.seed);
  return run_with_order_source(kind, query, universe, config, view, std::move(order), 0.0);
}

RunResult run_algorithm(AlgoKind kind, const QuerySpec& query, const Universe& universe,
                        const RunConfig& config) {
  switch (kind) {
    case AlgoKind::OnlinePerm:
      return run_online(query, universe, config);
    case AlgoKind::SeqPerm:
      return run_sequential(query, universe, config);
    case AlgoKind::FullKnowledge:
      return run_full_knowledge(query, universe, config);
    case AlgoKind::BruteForce:
      throw Error("BruteForce is an oracle, not a runnable strategy");
    default:
      return run_baseline(kind, query, universe, config);
  }
}

void write_trace_json(std::ostream& out, const RunResult& result) {
  nlohmann::ordered_json j;
  j["algorithm"] = std::string(to_string(result.algo));
  j["simulated_time_ms"] = result.simulated_time_ms;
  j["query_time_ms"] = result.query_time_ms;
  j["detection_time_ms"] = result.detection_time_ms;
  j["perm_time_ms"] = result.perm_time_ms;
  j["tuples_retrieved"] = result.tuples_retrieved;
  j["distinct_tuples"] = result.distinct_tuples;
  j["shortfall"] = result.shortfall;
  j["detections"] = result.detections;
  j["perm_versions"] = result.perm_versions;
  j["stats_versions"] = result.stats_versions;
  auto& events = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : result.trace) {
    events.push_back({{"source", e.source.index},
                      {"thread", e.thread},
                      {"dispatch_ms", e.dispatch_ms},
                      {"completion_ms", e.completion_ms},
                      {"new_tuples", e.new_tuples},
                      {"duplicate_tuples", e.duplicate_tuples},
                      {"failed", e.failed}});
  }
  out << j.dump(2) << '\n';
}

}  // namespace srcperm
