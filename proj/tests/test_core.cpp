// Core model: permutation state, cell signatures, lattice queries and the
// time-cost functions.

#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "srcperm/cost_model.hpp"
#include "srcperm/lattice.hpp"
#include "srcperm/permutation.hpp"
#include "srcperm/simulator.hpp"

using namespace srcperm;

namespace {

PermState order_of(std::size_t width, std::initializer_list<int> ids) {
  PermState p = PermState::empty(width);
  for (int id : ids) set2perm(p, SourceId(id));
  return p;
}

// |∩S_target| straight from tuple memberships.
double brute_intersect(const Universe& u, std::span<const SourceId> prefix, SourceId target) {
  double n = 0.0;
  for (std::uint32_t t = 0; t < u.tuple_count(); ++t) {
    const auto& m = u.membership(t);
    if (!m.test(target)) continue;
    for (auto s : prefix) {
      if (m.test(s)) {
        n += 1.0;
        break;
      }
    }
  }
  return n;
}

}  // namespace

TEST_CASE("permutation text round-trips with the pinned marker") {
  auto p = parse_permutation("2,0|1", 4);
  CHECK(p.order == std::vector<SourceId>{SourceId(2), SourceId(0), SourceId(1)});
  CHECK(p.pinned_prefix == 2);
  CHECK(p.unselected == std::vector<SourceId>{SourceId(3)});
  CHECK(format_permutation(p) == "2,0|1");
  CHECK(p.is_pinned(SourceId(0)));
  CHECK_FALSE(p.is_pinned(SourceId(1)));
  CHECK(format_permutation(parse_permutation("|3,1", 5)) == "|3,1");
  CHECK(format_permutation(parse_permutation("3,1|", 5)) == "3,1|");
}

TEST_CASE("malformed permutations are rejected") {
  CHECK_THROWS_AS(parse_permutation("1|2|3", 4), Error);
  CHECK_THROWS_AS(parse_permutation("1,x", 4), Error);
  PermState bad = PermState::empty(3);
  bad.order.push_back(SourceId(0));  // also still in unselected
  CHECK_THROWS(bad.validate());
}

TEST_CASE("cell signatures: hex round-trip and parents") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t width = 1 + rng() % 130;
    CellSignature sig(width);
    for (std::size_t s = 0; s < width; ++s) {
      if (rng() % 3 == 0) sig.set(SourceId(s));
    }
    CHECK(CellSignature::from_hex(sig.to_hex(), width) == sig);
    auto ps = parents(sig);
    if (sig.level() <= 1) {
      CHECK(ps.empty());
    } else {
      CHECK(ps.size() == sig.level());
      for (const auto& p : ps) CHECK(p.level() + 1 == sig.level());
    }
  }
  CellSignature a(4, {0, 2}), b(4, {2, 3}), c(4, {1});
  CHECK(a.intersects(b));
  CHECK_FALSE(a.intersects(c));
  CHECK(a.members() == std::vector<SourceId>{SourceId(0), SourceId(2)});
}

TEST_CASE("intersect_count matches a tuple-level count") {
  UniverseConfig cfg;
  cfg.n_sources = 8;
  cfg.n_distinct_tuples = 150;
  cfg.total_tuples = 420;
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto u = generate(cfg, seed);
    auto truth = u.ground_truth_snapshot(Predicate::all);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<SourceId> ids;
      for (std::uint32_t s = 0; s < cfg.n_sources; ++s) ids.emplace_back(s);
      std::shuffle(ids.begin(), ids.end(), rng);
      std::size_t len = rng() % cfg.n_sources;
      std::span<const SourceId> prefix(ids.data(), len);
      CHECK(intersect_count(prefix, ids.back(), truth) == doctest::Approx(brute_intersect(u, prefix, ids.back())));
    }
    for (std::uint32_t a = 0; a < cfg.n_sources; ++a) {
      std::vector<SourceId> one{SourceId(a)};
      CHECK(pairwise_intersection(SourceId(a), SourceId((a + 1) % cfg.n_sources), truth) ==
            doctest::Approx(brute_intersect(u, one, SourceId((a + 1) % cfg.n_sources))));
    }
  }
}

TEST_CASE("ground-truth snapshots satisfy every cardinality and survive a dump") {
  UniverseConfig cfg;
  cfg.n_sources = 10;
  cfg.n_distinct_tuples = 200;
  cfg.total_tuples = 700;
  auto u = generate(cfg, 9);
  for (auto p : {Predicate::all, Predicate::query}) {
    auto snap = u.ground_truth_snapshot(p);
    for (double r : snap.constraint_residuals()) CHECK(r == doctest::Approx(0.0));
    CHECK(snap.total_cell_mass() == doctest::Approx(static_cast<double>(u.distinct_count(p))));
    std::stringstream io;
    write_snapshot(io, snap);
    auto back = read_snapshot(io);
    CHECK(back.width() == snap.width());
    CHECK(back.cells.size() == snap.cells.size());
    for (const auto& [sig, cell] : snap.cells) {
      REQUIRE(back.cells.contains(sig));
      CHECK(back.cells.at(sig).value == cell.value);
      CHECK(back.cells.at(sig).provenance == cell.provenance);
    }
    for (std::size_t s = 0; s < snap.width(); ++s) {
      CHECK(back.sources[s].cardinality == snap.sources[s].cardinality);
      CHECK(back.sources[s].per_tuple_ms == doctest::Approx(snap.sources[s].per_tuple_ms));
    }
  }
}

TEST_CASE("pruned cells count as zero") {
  StatsSnapshot snap;
  snap.sources.resize(2);
  snap.sources[0].cardinality = 5;
  snap.sources[1].cardinality = 3;
  CellSignature a(2, {0}), ab(2, {0, 1}), b(2, {1});
  snap.cells[a] = {a, 5, Provenance::detected};
  snap.cells[b] = {b, 3, Provenance::detected};
  snap.cells[ab] = {ab, 2, Provenance::pruned_zero};
  CHECK(snap.total_cell_mass() == 8.0);
  CHECK(pairwise_intersection(SourceId(0), SourceId(1), snap) == 0.0);
  CHECK(ancestor_constraint_cells(SourceId(0), snap) == std::vector<CellSignature>{a});
}

TEST_CASE("worked example costs") {
  auto u = example1_universe();
  auto truth = u.ground_truth_snapshot(Predicate::all);
  // S2 alone holds 125 distinct tuples at 1.1 ms each.
  CHECK(permutation_time_cost(order_of(3, {1}), truth, 125).ms == doctest::Approx(125 * 1.1));
  // S1 in full (50 tuples at 0.7), then 75 of the 90 new tuples of S2 at
  // S2's full cost per new tuple.
  double s1s2 = 50 * 0.7 + 75 * (125 * 1.1 / 90.0);
  CHECK(permutation_time_cost(order_of(3, {0, 1}), truth, 125).ms == doctest::Approx(s1s2));
  // Prefix-average: k divided by the prefix's tuples per ms.
  double avg = 125 * (50 * 0.7 + 125 * 1.1) / (50 + 90.0);
  CHECK(permutation_time_cost(order_of(3, {0, 1}), truth, 125, CostSemantics::prefix_average).ms ==
        doctest::Approx(avg));
  auto all = permutation_time_cost(order_of(3, {1, 2, 0}), truth, 201);
  CHECK(all.shortfall);
  CHECK(all.prefix_len == 3);
}

TEST_CASE("query rate, covering prefix and average rate") {
  SourceProfile p{SourceId(0), 2.0, 0.5, 40.0};
  CHECK(query_rate(p, 10.0) == doctest::Approx(30.0 / 22.0));
  CHECK(query_rate(p, 50.0) == 0.0);
  std::vector<PermStep> steps{{10.0, 4.0}, {6.0, 3.0}, {8.0, 5.0}};
  CHECK(covering_prefix(steps, 4.0) == 1);
  CHECK(covering_prefix(steps, 4.5) == 2);
  CHECK(covering_prefix(steps, 100.0) == 3);
  CHECK(average_rate(steps) == doctest::Approx(12.0 / 24.0));
  CHECK_THROWS_AS(average_rate(std::span<const PermStep>{}), Error);
}

TEST_CASE("marginal cost is nondecreasing in k and never beats the prefix average bound") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> cost(1.0, 20.0), res(0.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PermStep> steps(1 + rng() % 6);
    double total = 0.0;
    for (auto& s : steps) {
      s = {cost(rng), res(rng)};
      total += s.residual;
    }
    double prev = 0.0;
    for (double k = 0.5; k <= total; k += 0.5) {
      auto t = time_cost(steps, k, CostSemantics::marginal);
      CHECK_FALSE(t.shortfall);
      CHECK(t.ms >= prev - 1e-9);
      prev = t.ms;
      // The covering source is charged only partially, so the marginal cost
      // never exceeds the full cost of the covering prefix.
      double full = 0.0;
      for (std::size_t i = 0; i < t.prefix_len; ++i) full += steps[i].cost_ms;
      CHECK(t.ms <= full + 1e-9);
    }
  }
}
