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

// Acceptance suite: one PASS/FAIL line per criterion. With --expect-fail the
// exit status is 0 only when exactly the listed criteria fail, so a known red
// stays visible without masking regressions.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srcperm/bench.hpp"
#include "srcperm/cost_model.hpp"
#include "srcperm/detection.hpp"
#include "srcperm/maxent.hpp"

namespace {

using namespace srcperm;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// 1. Piecewise optimum table over k = 1..200 and the crosspoint, under 1 s.
Outcome example1_table() {
  auto start = Clock::now();
  auto rep = verify_example1();
  double secs = seconds_since(start);
  bool pass = rep.matches == 200 && rep.total == 200 && rep.cross_ok && secs < 1.0;
  return {pass, fmt("%zu/%zu rows, crosspoint (%.2f, %.2f), %.3f s", rep.matches, rep.total,
                    rep.cross_k, rep.cross_ms, secs)};
}

// 2. Marginal costs on the worked example at k = 125.
Outcome example1_costs() {
  auto universe = example1_universe();
  auto truth = universe.ground_truth_snapshot(Predicate::all);
  auto cost = [&](std::vector<SourceId> order) {
    PermState p = PermState::empty(3);
    for (auto s : order) set2perm(p, s);
    return permutation_time_cost(p, truth, 125, CostSemantics::marginal).ms;
  };
  double s2 = cost({SourceId(1)});
  double s1s2 = cost({SourceId(0), SourceId(1)});
  bool exact = std::abs(s2 - 137.5) <= 1e-9;
  bool near = std::abs(s1s2 - 147.5) <= 0.5;
  return {exact && near, fmt("S2 = %.4f (want 137.5 within 1e-9: %s), S1S2 = %.4f (want 147.5 +/-0.5: %s)",
                             s2, exact ? "ok" : "no", s1s2, near ? "ok" : "no")};
}

// 3. OnlinePerm never beats the exhaustive optimum; the bound holds on >= 95%.
Outcome oracle() {
  auto start = Clock::now();
  auto records = oracle_study(200, 3, 8, 7);
  double secs = seconds_since(start);
  std::size_t dominated = 0, bounded = 0;
  for (const auto& r : records) {
    dominated += r.dominated;
    bounded += r.bound_ok;
  }
  std::ofstream log("acceptance_oracle.csv");
  write_oracle_csv(log, records);
  double share = static_cast<double>(bounded) / static_cast<double>(records.size());
  bool pass = records.size() == 200 && dominated == records.size() && share >= 0.95 && secs < 30.0;
  return {pass, fmt("dominance %zu/%zu, bound %zu/%zu (%.1f%%), %.2f s, per-instance log "
                    "acceptance_oracle.csv",
                    dominated, records.size(), bounded, records.size(), 100.0 * share, secs)};
}

// 4. Exact initial lattices at theta 0 and hard-row residuals online.
Outcome statistics_exactness() {
  auto start = Clock::now();
  std::size_t exact = 0, snapshots = 0;
  double worst = 0.0;
  std::string first_bad;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    UniverseConfig cfg;
    cfg.n_sources = 3 + static_cast<std::size_t>(seed % 10);  // 4..12
    cfg.n_distinct_tuples = 200;
    cfg.total_tuples = 200 * std::min<std::size_t>(cfg.n_sources, 3);
    auto universe = generate(cfg, seed);
    InitialDetectionConfig icfg;
    icfg.theta_sc = 0.0;
    auto initial = std::make_shared<const StatsSnapshot>(initial_detection(universe, icfg));

    const auto& truth = universe.lattice(Predicate::all);
    bool same = true;
    for (const auto& [sig, v] : truth) {
      auto it = initial->cells.find(sig);
      if (it == initial->cells.end() || it->second.effective_value() != v ||
          it->second.provenance != Provenance::detected) {
        same = false;
      }
    }
    for (const auto& [sig, cell] : initial->cells) {
      if (!truth.contains(sig) && cell.effective_value() != 0.0) same = false;
    }
    exact += same;
    if (!same && first_bad.empty()) first_bad = fmt(", first mismatch seed %llu", (unsigned long long)seed);

    QuerySpec query{Predicate::query, 1};
    StopLatch never;
    auto hint = baseline_order(AlgoKind::MinRT, *initial);
    for (const auto& snap : online_detection(universe, query, initial, hint, never)) {
      ++snapshots;
      auto res = snap->constraint_residuals();
      for (std::size_t s = 0; s < snap->width(); ++s) {
        if (!snap->sources[s].detected) continue;
        worst = std::max(worst, res[s] / std::max(1.0, snap->sources[s].cardinality));
      }
    }
  }
  double secs = seconds_since(start);
  bool pass = exact == 20 && worst <= 1e-6 && secs < 30.0;
  return {pass, fmt("%zu/20 lattices exact%s, worst hard-row residual %.2e over %zu snapshots, %.2f s",
                    exact, first_bad.c_str(), worst, snapshots, secs)};
}

double entropy_of(const std::vector<double>& w) { return entropy_objective(w); }

// 5. Symmetric instance and brute-force grid comparison on small problems.
Outcome maxent_correctness() {
  // Symmetric: singletons known at m, pairwise cells free, no triple.
  const double n = 50.0, m = 14.0;
  std::map<SourceId, double> rows{{SourceId(0), n}, {SourceId(1), n}, {SourceId(2), n}};
  std::map<CellSignature, double> known{{CellSignature(3, {0}), m}, {CellSignature(3, {1}), m},
                                        {CellSignature(3, {2}), m}};
  std::vector<CellSignature> free{CellSignature(3, {0, 1}), CellSignature(3, {0, 2}),
                                  CellSignature(3, {1, 2})};
  auto sym = maxent_solve(rows, known, free);
  double sym_err = 0.0;
  for (const auto& sig : free) {
    sym_err = std::max(sym_err, std::abs(sym.values.at(sig) - (n - m) / 2) / ((n - m) / 2));
  }

  // Random feasible instances over two or three sources with 1..3 free cells.
  std::mt19937_64 rng(11);
  std::size_t instances = 0, matched = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t width = 2 + trial % 2;
    std::vector<CellSignature> all;
    for (std::uint32_t mask = 1; mask < (1u << width); ++mask) {
      CellSignature sig(width);
      for (std::uint32_t b = 0; b < width; ++b) {
        if (mask & (1u << b)) sig.set(SourceId(b));
      }
      all.push_back(sig);
    }
    std::shuffle(all.begin(), all.end(), rng);
    std::size_t n_free = 1 + trial % 3;
    std::uniform_real_distribution<double> value(1.0, 20.0);
    std::map<CellSignature, double> k;
    std::vector<CellSignature> f(all.begin(), all.begin() + n_free);
    std::map<SourceId, double> b;
    for (std::uint32_t s = 0; s < width; ++s) b[SourceId(s)] = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      double v = std::round(value(rng));
      if (i >= n_free) k[all[i]] = v;
      for (auto s : all[i].members()) b[s] += v;
    }
    auto res = maxent_solve(b, k, f);
    std::vector<double> got;
    for (const auto& sig : f) got.push_back(res.values.at(sig));

    // Grid over the free cells at 1% of the largest constraint; a point is
    // feasible when every row is met within one step.
    double scale = 0.0;
    for (const auto& [s, v] : b) scale = std::max(scale, v);
    double step = 0.01 * scale;
    std::vector<double> point(n_free, 0.0), best_point;
    double best = -1e300;
    std::function<void(std::size_t)> walk = [&](std::size_t d) {
      if (d == n_free) {
        for (const auto& [s, target] : b) {
          double sum = 0.0;
          for (const auto& [sig, v] : k) sum += sig.test(s) ? v : 0.0;
          for (std::size_t i = 0; i < n_free; ++i) sum += f[i].test(s) ? point[i] : 0.0;
          if (std::abs(sum - target) > step) return;
        }
        double h = entropy_of(point);
        if (h > best) {
          best = h;
          best_point = point;
        }
        return;
      }
      for (int g = 0; g <= 100; ++g) {
        point[d] = g * step;
        walk(d + 1);
      }
    };
    walk(0);
    if (best_point.empty()) continue;
    ++instances;
    // First-order entropy change from moving each coordinate by one step
    // plus the feasibility slack, evaluated at the solver optimum.
    double grid_error = 0.0;
    for (double w : got) grid_error += 2.0 * step * (std::abs(std::log(std::max(w, 1e-12))) + 1.0);
    double gap = std::abs(entropy_of(got) - best);
    worst_gap = std::max(worst_gap, gap / std::max(grid_error, 1e-12));
    matched += gap <= grid_error;
  }
  bool pass = sym_err <= 1e-6 && instances > 0 && matched == instances;
  return {pass, fmt("symmetric pairwise error %.2e (cells %.6f, want %.6f), grid match %zu/%zu "
                    "(worst gap %.2f of grid error)",
                    sym_err, sym.values.at(free[0]), (n - m) / 2, matched, instances, worst_gap)};
}

ExperimentGrid table_grid() {
  ExperimentGrid g;
  g.algorithms = table_algorithms();
  std::reverse(g.algorithms.begin(), g.algorithms.end());  // FullKnowledge first
  g.seeds.clear();
  for (std::uint64_t s = 1; s <= 10; ++s) g.seeds.push_back(s);
  g.defaults.k_fraction = 0.8;
  return g;
}

// Observed ranking equals the expected one or differs by one adjacent swap.
bool within_one_adjacent_swap(const std::vector<std::size_t>& ranking) {
  std::size_t n = ranking.size();
  std::vector<std::size_t> expected(n);
  std::iota(expected.begin(), expected.end(), 0);
  if (ranking == expected) return true;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto swapped = expected;
    std::swap(swapped[i], swapped[i + 1]);
    if (ranking == swapped) return true;
  }
  return false;
}

// 6. Table ordering at k = 0.8 |Y1|, 10 seeds, under 2 min.
Outcome table_ordering() {
  auto start = Clock::now();
  auto grid = table_grid();
  auto rows = run_grid(grid);
  double secs = seconds_since(start);
  std::vector<std::size_t> ranking(rows.size());
  std::iota(ranking.begin(), ranking.end(), 0);
  std::stable_sort(ranking.begin(), ranking.end(),
                   [&](auto a, auto b) { return rows[a].mean_time_ms < rows[b].mean_time_ms; });
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += fmt("%s%s %.1f", i ? ", " : "", std::string(to_string(rows[i].algo)).c_str(),
                  rows[i].mean_time_ms);
  }
  bool pass = within_one_adjacent_swap(ranking) && secs < 120.0;
  return {pass, detail + fmt("; %.1f s", secs)};
}

// 7. OnlinePerm time against the source count grows at most ~linearly.
Outcome scalability() {
  ExperimentGrid g;
  g.algorithms = {AlgoKind::OnlinePerm};
  g.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  g.n_sources = {50, 100, 150, 200};
  auto rows = run_grid(g);
  std::vector<double> x, y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.push_back(static_cast<double>(g.n_sources[i]));
    y.push_back(rows[i].mean_time_ms);
  }
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  double slope = sxy / sxx, intercept = my - slope * mx;
  bool pass = true;
  std::string detail = "means";
  for (double v : y) detail += fmt(" %.1f", v);
  detail += "; ratio/fit";
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    double fit_lo = intercept + slope * x[i], fit_hi = intercept + slope * x[i + 1];
    double fit_ratio = fit_lo > 0.0 ? fit_hi / fit_lo : INFINITY;
    double ratio = y[i + 1] / y[i];
    pass &= ratio < 1.5 * fit_ratio;
    detail += fmt(" %.3f/%.3f", ratio, fit_ratio);
  }
  return {pass, detail};
}

// 8. Detection overhead raises OnlinePerm monotonically and leaves
// FullKnowledge alone.
Outcome overhead() {
  ExperimentGrid g;
  g.algorithms = {AlgoKind::OnlinePerm, AlgoKind::FullKnowledge};
  g.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  g.overhead_factors = {1.0, 1.2, 1.4, 1.6, 1.8};
  auto rows = run_grid(g);
  std::vector<double> online, full;
  for (const auto& r : rows) (r.algo == AlgoKind::OnlinePerm ? online : full).push_back(r.mean_time_ms);
  bool pass = online.size() == 5 && full.size() == 5;
  for (std::size_t i = 0; i + 1 < online.size(); ++i) pass &= online[i + 1] >= online[i];
  for (double v : full) pass &= v == full.front();
  std::string detail = "OnlinePerm";
  for (double v : online) detail += fmt(" %.3f", v);
  detail += "; FullKnowledge";
  for (double v : full) detail += fmt(" %.3f", v);
  return {pass, detail};
}

// 9. Two runs of the same grid give byte-identical CSV.
Outcome determinism() {
  auto grid = table_grid();
  grid.seeds = {3, 4};
  grid.k_fractions = {0.2, 0.8};
  grid.jobs = 2;
  auto csv = [&] {
    std::ostringstream out;
    write_csv(out, run_grid(grid));
    return out.str();
  };
  auto a = csv(), b = csv();
  return {a == b && !a.empty(), fmt("%zu bytes, %s", a.size(), a == b ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> expect_fail, only;
  app.add_option("--expect-fail", expect_fail, "Criteria known to fail");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"example1-table", example1_table},   {"example1-costs", example1_costs},
      {"oracle", oracle},                   {"stats-exactness", statistics_exactness},
      {"maxent", maxent_correctness},       {"table-ordering", table_ordering},
      {"scalability", scalability},         {"overhead", overhead},
      {"determinism", determinism},
  };
  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    if (!out.pass) failed.insert(id);
    std::cout << (out.pass ? "PASS " : "FAIL ") << id << ' ' << criteria[i].first << ": "
              << out.detail << std::endl;
  }
  std::set<int> expected;
  for (int id : expect_fail) {
    if (only.empty() || std::find(only.begin(), only.end(), id) != only.end()) expected.insert(id);
  }
  if (failed != expected) {
    std::cout << "unexpected outcome: " << failed.size() << " failing, " << expected.size()
              << " expected to fail" << std::endl;
    return 1;
  }
  if (!expected.empty()) std::cout << "all failures are the documented ones" << std::endl;
  return 0;
}
