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

#include "srcperm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "srcperm/cost_model.hpp"
#include "srcperm/permutation.hpp"

namespace srcperm {

namespace {

using json = nlohmann::json;

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string short_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw Error(std::string(where) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw Error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void read_range(const json& obj, const char* key, double& lo, double& hi) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (!it->is_array() || it->size() != 2) throw Error(std::string(key) + " must be [min, max]");
  lo = (*it)[0].get<double>();
  hi = (*it)[1].get<double>();
}

double sample_stddev(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::size_t resolve_k(double fraction, std::size_t distinct) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(distinct)));
  return std::max<std::size_t>(1, k);
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

const std::vector<AlgoKind>& table_algorithms() {
  static const std::vector<AlgoKind> algos{AlgoKind::Random,  AlgoKind::MaxT,       AlgoKind::MaxRT,
                                           AlgoKind::MinT,    AlgoKind::MinRT,      AlgoKind::SeqPerm,
                                           AlgoKind::OnlinePerm, AlgoKind::FullKnowledge};
  return algos;
}

std::vector<Condition> ExperimentGrid::conditions() const {
  std::vector<Condition> out;
  for (double v : k_fractions) {
    Condition c = defaults;
    c.k_fraction = v;
    c.label = "k=" + short_number(v) + "|Y1|";
    out.push_back(c);
  }
  for (auto v : query_threads) {
    Condition c = defaults;
    c.query_threads = v;
    c.label = "threads=" + std::to_string(v);
    out.push_back(c);
  }
  for (auto v : n_sources) {
    Condition c = defaults;
    c.n_sources = v;
    c.label = "sources=" + std::to_string(v);
    out.push_back(c);
  }
  for (double v : query_splits) {
    Condition c = defaults;
    c.query_split = v;
    c.label = "|Y1|=" + short_number(v) + "|Y|";
    out.push_back(c);
  }
  for (double v : overhead_factors) {
    Condition c = defaults;
    c.overhead_factor = v;
    c.label = "overhead=" + short_number(v) + "x";
    out.push_back(c);
  }
  if (out.empty()) {
    Condition c = defaults;
    c.label = "default";
    out.push_back(c);
  }
  return out;
}

ExperimentGrid parse_grid(const json& doc) {
  check_keys(doc, "config", {"universe", "run", "defaults", "axes", "algorithms", "seeds", "jobs",
                             "trace_dir"});
  ExperimentGrid g;
  g.algorithms = table_algorithms();

  if (auto it = doc.find("universe"); it != doc.end()) {
    const auto& u = *it;
    check_keys(u, "universe", {"n_sources", "n_distinct_tuples", "total_tuples", "ta_ms", "tr_ms",
                               "replication", "constant_replication", "cluster_size",
                               "neighbour_skip", "size_spread", "detection_cost_ms", "unavailable"});
    read(u, "n_sources", g.universe.n_sources);
    read(u, "n_distinct_tuples", g.universe.n_distinct_tuples);
    read(u, "total_tuples", g.universe.total_tuples);
    read_range(u, "ta_ms", g.universe.latency.ta_min_ms, g.universe.latency.ta_max_ms);
    read_range(u, "tr_ms", g.universe.latency.tr_min_ms, g.universe.latency.tr_max_ms);
    if (auto r = u.find("replication"); r != u.end()) {
      auto name = r->get<std::string>();
      if (name == "copying") {
        g.universe.replication = ReplicationModel::copying;
      } else if (name == "uniform") {
        g.universe.replication = ReplicationModel::uniform;
      } else if (name == "constant") {
        g.universe.replication = ReplicationModel::constant;
      } else {
        throw Error("replication must be 'copying', 'uniform' or 'constant'");
      }
    }
    read(u, "constant_replication", g.universe.constant_replication);
    read(u, "cluster_size", g.universe.cluster_size);
    read(u, "neighbour_skip", g.universe.neighbour_skip);
    read(u, "size_spread", g.universe.size_spread);
    read(u, "detection_cost_ms", g.universe.detection_cost_ms);
    if (auto r = u.find("unavailable"); r != u.end()) {
      for (auto s : r->get<std::vector<std::uint32_t>>()) g.universe.unavailable.emplace_back(s);
    }
  }
  g.defaults.n_sources = g.universe.n_sources;

  if (auto it = doc.find("run"); it != doc.end()) {
    const auto& r = *it;
    check_keys(r, "run", {"theta_sp", "theta_sc", "threshold_mode", "sample_rate", "charge_detection",
                          "perm_ms_per_unit", "charge_sp_online", "batch_size", "prior_ratio",
                          "reduced_reperm"});
    read(r, "theta_sp", g.run.theta_sp);
    read(r, "theta_sc", g.run.initial.theta_sc);
    if (auto m = r.find("threshold_mode"); m != r.end()) {
      auto name = m->get<std::string>();
      if (name == "absolute") {
        g.run.initial.threshold_mode = ThresholdMode::absolute;
      } else if (name == "relative") {
        g.run.initial.threshold_mode = ThresholdMode::relative;
      } else {
        throw Error("threshold_mode must be 'absolute' or 'relative'");
      }
    }
    read(r, "sample_rate", g.run.initial.sample_rate);
    read(r, "charge_detection", g.run.charge_detection);
    read(r, "perm_ms_per_unit", g.run.perm_ms_per_unit);
    read(r, "charge_sp_online", g.run.charge_sp_online);
    read(r, "batch_size", g.run.online.batch_size);
    read(r, "prior_ratio", g.run.online.prior_ratio);
    read(r, "reduced_reperm", g.run.reduced_reperm);
  }

  if (auto it = doc.find("defaults"); it != doc.end()) {
    const auto& d = *it;
    check_keys(d, "defaults", {"k_fraction", "query_threads", "n_sources", "query_split",
                               "overhead_factor"});
    read(d, "k_fraction", g.defaults.k_fraction);
    read(d, "query_threads", g.defaults.query_threads);
    read(d, "n_sources", g.defaults.n_sources);
    read(d, "query_split", g.defaults.query_split);
    read(d, "overhead_factor", g.defaults.overhead_factor);
  }

  if (auto it = doc.find("axes"); it != doc.end()) {
    const auto& a = *it;
    check_keys(a, "axes", {"k_fraction", "query_threads", "n_sources", "query_split",
                           "overhead_factor"});
    read(a, "k_fraction", g.k_fractions);
    read(a, "query_threads", g.query_threads);
    read(a, "n_sources", g.n_sources);
    read(a, "query_split", g.query_splits);
    read(a, "overhead_factor", g.overhead_factors);
  }

  if (auto it = doc.find("algorithms"); it != doc.end()) {
    g.algorithms.clear();
    for (const auto& name : it->get<std::vector<std::string>>()) {
      auto kind = parse_algo(name);
      if (kind == AlgoKind::BruteForce) throw Error("BruteForce cannot be run in a grid");
      g.algorithms.push_back(kind);
    }
  }
  read(doc, "seeds", g.seeds);
  read(doc, "jobs", g.jobs);
  read(doc, "trace_dir", g.trace_dir);

  if (g.seeds.empty()) throw Error("seeds must not be empty");
  if (g.algorithms.empty()) throw Error("algorithms must not be empty");
  for (const auto& c : g.conditions()) {
    if (!(c.k_fraction > 0.0)) throw Error("k fraction must be positive");
    if (c.query_threads == 0) throw Error("query threads must be positive");
    UniverseConfig u = g.universe;
    u.n_sources = c.n_sources;
    u.query_split = c.query_split;
    u.overhead_factor = c.overhead_factor;
    u.validate();
  }
  return g;
}

ExperimentGrid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
  return parse_grid(doc);
}

std::vector<GridRow> run_grid(const ExperimentGrid& grid) {
  const auto conditions = grid.conditions();
  const std::size_t n_seeds = grid.seeds.size();
  const std::size_t n_algos = grid.algorithms.size();
  // results[condition][seed][algo]
  std::vector<RunResult> results(conditions.size() * n_seeds * n_algos);

  if (!grid.trace_dir.empty()) std::filesystem::create_directories(grid.trace_dir);

  parallel_for(conditions.size() * n_seeds, grid.jobs, [&](std::size_t cell) {
    const auto& c = conditions[cell / n_seeds];
    const std::uint64_t seed = grid.seeds[cell % n_seeds];
    UniverseConfig ucfg = grid.universe;
    ucfg.n_sources = c.n_sources;
    ucfg.query_split = c.query_split;
    ucfg.overhead_factor = c.overhead_factor;
    auto universe = generate(ucfg, seed);

    RunConfig rc = grid.run;
    rc.query_threads = c.query_threads;
    rc.seed = seed;
    rc.initial_snapshot = std::make_shared<const StatsSnapshot>(initial_detection(universe, rc.initial));
    QuerySpec query{Predicate::query, resolve_k(c.k_fraction, universe.distinct_count(Predicate::query))};

    for (std::size_t a = 0; a < n_algos; ++a) {
      auto res = run_algorithm(grid.algorithms[a], query, universe, rc);
      if (!grid.trace_dir.empty()) {
        std::string name = c.label + "_seed" + std::to_string(seed) + "_" +
                           std::string(to_string(grid.algorithms[a])) + ".json";
        for (auto& ch : name) {
          if (ch == '|' || ch == '/' || ch == '=') ch = '_';
        }
        std::ofstream out(std::filesystem::path(grid.trace_dir) / name);
        write_trace_json(out, res);
      }
      results[cell * n_algos + a] = std::move(res);
    }
  });

  std::vector<GridRow> rows;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    for (std::size_t a = 0; a < n_algos; ++a) {
      GridRow row;
      row.condition = conditions[ci].label;
      row.algo = grid.algorithms[a];
      for (std::size_t si = 0; si < n_seeds; ++si) {
        const auto& r = results[(ci * n_seeds + si) * n_algos + a];
        row.times_ms.push_back(r.simulated_time_ms);
        row.shortfall_count += r.shortfall ? 1 : 0;
      }
      double sum = 0.0;
      for (double t : row.times_ms) sum += t;
      row.mean_time_ms = sum / static_cast<double>(row.times_ms.size());
      row.stddev_ms = sample_stddev(row.times_ms, row.mean_time_ms);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "condition,algorithm,mean_time_ms,stddev_ms,shortfall_count\n";
  for (const auto& r : rows) {
    out << r.condition << ',' << to_string(r.algo) << ',' << fixed3(r.mean_time_ms) << ','
        << fixed3(r.stddev_ms) << ',' << r.shortfall_count << '\n';
  }
}

Example1Report verify_example1(const UniverseConfig& config) {
  auto universe = generate(config, 1);
  auto truth = universe.ground_truth_snapshot(Predicate::all);
  const SourceId s1(0), s2(1), s3(2);

  auto expected = [&](std::size_t k) -> std::vector<SourceId> {
    if (k <= 50) return {s1};
    if (k <= 96) return {s1, s2};
    if (k <= 125) return {s2};
    if (k <= 190) return {s2, s3};
    return {s2, s3, s1};
  };
  auto cost_of = [&](const std::vector<SourceId>& order, double k) {
    return time_cost(perm_steps(order, truth), k, CostSemantics::marginal);
  };
  auto label = [](const std::vector<SourceId>& order) {
    std::string s;
    for (auto id : order) s += "S" + std::to_string(id.index + 1);
    return s;
  };

  Example1Report rep;
  for (std::size_t k = 1; k <= 200; ++k) {
    ++rep.total;
    auto want = expected(k);
    auto want_cost = cost_of(want, static_cast<double>(k));
    auto got = brute_force_opt(QuerySpec{Predicate::all, k}, truth, CostSemantics::marginal);
    bool same = got.perm.order == want;
    bool tie = !same && !want_cost.shortfall &&
               std::abs(got.cost.ms - want_cost.ms) <= 1e-9 * std::max(1.0, want_cost.ms);
    if (same || tie) {
      ++rep.matches;
      rep.ties += tie ? 1 : 0;
    } else {
      std::ostringstream msg;
      msg << "k=" << k << ": expected " << label(want) << " (" << want_cost.ms << " ms), oracle "
          << label(got.perm.order) << " (" << got.cost.ms << " ms)";
      rep.mismatches.push_back(msg.str());
    }
  }

  // First sign change of T(S1S2S3) − T(S2S3S1), refined by bisection.
  const std::vector<SourceId> a{s1, s2, s3}, b{s2, s3, s1};
  auto gap = [&](double k) { return cost_of(a, k).ms - cost_of(b, k).ms; };
  double lo = 0.5, hi = 0.0;
  bool found = false;
  for (double k = 0.5; k + 0.25 <= 200.0; k += 0.25) {
    if (gap(k) < 0.0 && gap(k + 0.25) >= 0.0) {
      lo = k;
      hi = k + 0.25;
      found = true;
      break;
    }
  }
  if (found) {
    for (int i = 0; i < 100; ++i) {
      double mid = 0.5 * (lo + hi);
      (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    rep.cross_k = 0.5 * (lo + hi);
    rep.cross_ms = cost_of(a, rep.cross_k).ms;
    rep.cross_ok = std::abs(rep.cross_k - 96.8) <= 0.5 && std::abs(rep.cross_ms - 106.4) <= 0.5;
  }
  return rep;
}

void print_report(std::ostream& out, const Example1Report& report) {
  out << "piecewise optimum table: " << report.matches << "/" << report.total << " match";
  if (report.ties > 0) out << " (" << report.ties << " by equal-cost tie)";
  out << '\n';
  for (const auto& m : report.mismatches) out << "  mismatch " << m << '\n';
  char buf[128];
  std::snprintf(buf, sizeof buf, "crosspoint: (%.2f, %.2f) vs (96.8, 106.4) +/-0.5: %s\n",
                report.cross_k, report.cross_ms, report.cross_ok ? "ok" : "FAIL");
  out << buf;
}

std::vector<OracleRecord> oracle_study(std::size_t instances, std::size_t min_sources,
                                       std::size_t max_sources, std::uint64_t seed) {
  if (min_sources == 0 || max_sources < min_sources) throw Error("invalid source range");
  if (max_sources > kOracleMaxSources) throw Error("oracle size bound");
  std::vector<OracleRecord> out;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    OracleRecord rec;
    rec.seed = rng();
    rec.l = min_sources + static_cast<std::size_t>(rng() % (max_sources - min_sources + 1));
    UniverseConfig cfg;
    cfg.n_sources = rec.l;
    cfg.n_distinct_tuples = 20 * rec.l;
    cfg.total_tuples = 50 * rec.l;
    cfg.cluster_size = 3;
    cfg.latency = LatencyModel{1.0, 10.0, 0.05, 0.5};
    cfg.query_split = 1.0;
    auto u = generate(cfg, rec.seed);
    auto truth = std::make_shared<const StatsSnapshot>(u.ground_truth_snapshot(Predicate::all));
    rec.k = 1 + static_cast<std::size_t>(rng() % u.tuple_count());
    QuerySpec q{Predicate::all, rec.k};

    auto online = online_perm(q, truth, PermState::empty(rec.l));
    auto steps = perm_steps(online.perm.order, *truth);
    rec.online_ms = time_cost(steps, static_cast<double>(rec.k), CostSemantics::marginal).ms;
    rec.online_avg_ms = time_cost(steps, static_cast<double>(rec.k), CostSemantics::prefix_average).ms;
    rec.opt_ms = brute_force_opt(q, *truth, CostSemantics::marginal).cost.ms;
    rec.opt_avg_ms = brute_force_opt(q, *truth, CostSemantics::prefix_average).cost.ms;
    rec.dominated = rec.online_ms >= rec.opt_ms - 1e-9 * std::max(1.0, rec.opt_ms);
    rec.ratio = rec.opt_avg_ms > 0.0 ? rec.online_avg_ms / rec.opt_avg_ms : 1.0;
    rec.bound = approx_bound(q, *truth);
    rec.bound_ok = rec.ratio <= rec.bound + 1e-9;
    out.push_back(rec);
  }
  return out;
}

void write_oracle_csv(std::ostream& out, const std::vector<OracleRecord>& records) {
  out << "seed,l,k,online_ms,opt_ms,online_avg_ms,opt_avg_ms,ratio,bound,dominated,bound_ok\n";
  for (const auto& r : records) {
    out << r.seed << ',' << r.l << ',' << r.k << ',' << fixed3(r.online_ms) << ','
        << fixed3(r.opt_ms) << ',' << fixed3(r.online_avg_ms) << ',' << fixed3(r.opt_avg_ms) << ','
        << fixed3(r.ratio) << ',' << fixed3(r.bound) << ',' << (r.dominated ? 1 : 0) << ','
        << (r.bound_ok ? 1 : 0) << '\n';
  }
}

}  // namespace srcperm
