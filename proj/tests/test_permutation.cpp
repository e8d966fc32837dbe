// Permutation primitives, GreedyQR/RePerm/OnlinePerm, baselines and the
// exhaustive oracle.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "srcperm/cost_model.hpp"
#include "srcperm/permutation.hpp"
#include "srcperm/shared_slot.hpp"
#include "srcperm/simulator.hpp"

using namespace srcperm;

namespace {

std::vector<SourceId> ids(std::initializer_list<int> v) {
  std::vector<SourceId> out;
  for (int i : v) out.emplace_back(i);
  return out;
}

// Sources with no shared tuples.
StatsSnapshot disjoint_snapshot(const std::vector<double>& cards, const std::vector<double>& ta,
                                const std::vector<double>& tr) {
  StatsSnapshot snap;
  std::size_t l = cards.size();
  snap.sources.resize(l);
  for (std::size_t s = 0; s < l; ++s) {
    snap.sources[s] = {ta[s], tr[s], cards[s], true, true};
    CellSignature sig(l, {static_cast<std::uint32_t>(s)});
    snap.cells[sig] = {sig, cards[s], Provenance::detected};
  }
  return snap;
}

StatsSnapshot example_truth() { return example1_universe().ground_truth_snapshot(Predicate::all); }

std::vector<Universe> small_universes(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Universe> out;
  for (std::size_t i = 0; i < count; ++i) {
    UniverseConfig cfg;
    cfg.n_sources = 3 + rng() % 5;
    cfg.n_distinct_tuples = 40 + rng() % 60;
    cfg.total_tuples = cfg.n_distinct_tuples * 2;
    cfg.query_split = 1.0;
    out.push_back(generate(cfg, rng()));
  }
  return out;
}

}  // namespace

TEST_CASE("set2perm, swap and pinned sources") {
  PermState p = PermState::empty(5);
  set2perm(p, SourceId(3));
  set2perm(p, SourceId(1));
  set2perm(p, SourceId(4));
  p.validate();
  CHECK(p.order == ids({3, 1, 4}));
  CHECK(p.unselected == ids({0, 2}));
  CHECK_THROWS_AS(set2perm(p, SourceId(3)), Error);

  swap(p, SourceId(1), SourceId(0));
  p.validate();
  CHECK(p.order == ids({3, 0}));
  CHECK(p.unselected == ids({1, 2, 4}));

  p.pinned_prefix = 1;
  CHECK_THROWS_AS(swap(p, SourceId(3), SourceId(2)), PinnedError);
}

TEST_CASE("perm2set drops sources behind the covering prefix but keeps pinned ones") {
  auto truth = example_truth();
  OverlapIndex index(truth);
  PermState p = PermState::empty(3);
  for (int s : {1, 2, 0}) set2perm(p, SourceId(s));
  auto c = perm2set(p, 100, index);
  CHECK(c.perm.order == ids({1}));
  CHECK(c.n_sum == doctest::Approx(125.0));
  p.pinned_prefix = 3;
  auto pinned = perm2set(p, 100, index);
  CHECK(pinned.perm.order == ids({1, 2, 0}));
}

TEST_CASE("insec and counter follow the lattice") {
  auto truth = example_truth();
  PermState p = PermState::empty(3);
  set2perm(p, SourceId(1));
  auto in = insec(p, p.unselected, truth);
  CHECK(in.at(SourceId(0)) == doctest::Approx(35.0));
  CHECK(in.at(SourceId(2)) == doctest::Approx(10.0));
  set2perm(p, SourceId(2));
  CHECK(counter(p, truth) == doctest::Approx(125.0 + 65.0));
}

TEST_CASE("sort_candidates orders by overlap ratio and honours theta and reduced") {
  auto truth = example_truth();
  OverlapIndex index(truth);
  auto pool = ids({0, 2});
  // Anchor S2 (125): S1 shares 35, S3 shares 10.
  auto all = sort_candidates(SourceId(1), pool, index, 0.0);
  REQUIRE(all.size() == 2);
  CHECK(all[0].first == SourceId(0));
  CHECK(all[0].second == doctest::Approx(35.0 / 125.0));
  CHECK(all[1].second == doctest::Approx(10.0 / 125.0));
  CHECK(sort_candidates(SourceId(1), pool, index, 0.1).size() == 1);
  CHECK(sort_candidates(SourceId(1), pool, index, 0.0, true).size() == 1);
}

TEST_CASE("worked example baselines") {
  auto truth = example_truth();
  CHECK(baseline(AlgoKind::MaxRT, QuerySpec{Predicate::all, 200}, truth).perm.order == ids({1, 2, 0}));
  CHECK(baseline(AlgoKind::MaxT, QuerySpec{Predicate::all, 200}, truth).perm.order == ids({1, 2, 0}));
  auto expected = ids({0, 1, 2});  // 0.7, 1.1, 1.5 ms per tuple
  CHECK(baseline_order(AlgoKind::MinT, truth) == expected);
  auto r1 = baseline_order(AlgoKind::Random, truth, 42);
  CHECK(r1 == baseline_order(AlgoKind::Random, truth, 42));
  CHECK(std::set<SourceId>(r1.begin(), r1.end()).size() == 3);
}

TEST_CASE("MinRT equals MinT and OnlinePerm equals GreedyQR when sources are disjoint") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> card(5, 80), ta(1, 20), tr(0.05, 0.5);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t l = 3 + rng() % 6;
    std::vector<double> c(l), a(l), r(l);
    for (std::size_t s = 0; s < l; ++s) {
      c[s] = std::round(card(rng));
      a[s] = ta(rng);
      r[s] = tr(rng);
    }
    auto snap = disjoint_snapshot(c, a, r);
    CHECK(baseline_order(AlgoKind::MinRT, snap) == baseline_order(AlgoKind::MinT, snap));
    QuerySpec q{Predicate::all, static_cast<std::size_t>(0.6 * std::accumulate(c.begin(), c.end(), 0.0))};
    auto ptr = std::make_shared<const StatsSnapshot>(snap);
    auto greedy = greedy_qr(q, PermState::empty(l), snap);
    auto online = online_perm(q, ptr, PermState::empty(l));
    CHECK(online.perm.order == greedy.perm.order);
  }
}

TEST_CASE("OnlinePerm picks S2 on the worked example at k = 125") {
  auto ptr = std::make_shared<const StatsSnapshot>(example_truth());
  auto c = online_perm(QuerySpec{Predicate::all, 125}, ptr, PermState::empty(3));
  REQUIRE_FALSE(c.perm.order.empty());
  CHECK(c.perm.order.front() == SourceId(1));
}

TEST_CASE("RePerm only returns strict improvements") {
  auto truth = example_truth();
  OverlapIndex index(truth);
  QuerySpec q{Predicate::all, 125};
  PermState p = PermState::empty(3);
  set2perm(p, SourceId(0));
  set2perm(p, SourceId(1));
  double v = avg_query_rate(p, truth);
  auto better = re_perm(SourceId(0), q, p, v, index, 0.0);
  if (better) CHECK(better->v_avg > v);
  auto best = greedy_qr(q, PermState::empty(3), index);
  CHECK_FALSE(re_perm(best.perm.order.front(), q, best.perm, 1e9, index, 0.0).has_value());
}

TEST_CASE("OnlinePerm never beats the exhaustive optimum") {
  for (const auto& u : small_universes(60, 31)) {
    auto truth = std::make_shared<const StatsSnapshot>(u.ground_truth_snapshot(Predicate::all));
    std::size_t total = u.distinct_count(Predicate::all);
    for (double frac : {0.3, 0.7, 1.0}) {
      QuerySpec q{Predicate::all, std::max<std::size_t>(1, static_cast<std::size_t>(frac * total))};
      auto opt = brute_force_opt(q, *truth);
      auto online = online_perm(q, truth, PermState::empty(u.source_count()));
      auto cost = permutation_time_cost(online.perm, *truth, q.k);
      CHECK(cost.ms >= opt.cost.ms - 1e-9);
      CHECK(approx_bound(q, *truth) >= 1.0);
    }
  }
}

TEST_CASE("the oracle matches enumerating every order directly") {
  // Independent enumeration: all orders of all sources, cost of the first
  // covering prefix.
  for (const auto& u : small_universes(15, 77)) {
    auto truth = u.ground_truth_snapshot(Predicate::all);
    std::size_t l = u.source_count();
    std::size_t k = std::max<std::size_t>(1, u.distinct_count(Predicate::all) / 2);
    std::vector<SourceId> order;
    for (std::size_t s = 0; s < l; ++s) order.emplace_back(s);
    double best = INFINITY;
    do {
      best = std::min(best, time_cost(perm_steps(order, truth), static_cast<double>(k),
                                      CostSemantics::marginal).ms);
    } while (std::next_permutation(order.begin(), order.end()));
    CHECK(brute_force_opt(QuerySpec{Predicate::all, k}, truth).cost.ms == doctest::Approx(best));
  }
}

TEST_CASE("oracle refuses oversized universes") {
  UniverseConfig cfg;
  cfg.n_sources = kOracleMaxSources + 1;
  cfg.n_distinct_tuples = 50;
  cfg.total_tuples = 100;
  auto truth = generate(cfg, 1).ground_truth_snapshot(Predicate::all);
  CHECK_THROWS_AS(brute_force_opt(QuerySpec{Predicate::all, 10}, truth), Error);
}

TEST_CASE("approximation bound is 1 for identical sources at k = |S|") {
  std::vector<double> c(4, 30.0), a(4, 2.0), r(4, 0.1);
  auto snap = disjoint_snapshot(c, a, r);
  CHECK(approx_bound(QuerySpec{Predicate::all, 30}, snap) == doctest::Approx(1.0));
}

TEST_CASE("OnlinePerm keeps the pinned prefix and publishes supersets of it") {
  for (const auto& u : small_universes(20, 5)) {
    auto truth = std::make_shared<const StatsSnapshot>(u.ground_truth_snapshot(Predicate::all));
    QuerySpec q{Predicate::all, u.distinct_count(Predicate::all) * 3 / 4};
    PermState start = PermState::empty(u.source_count());
    set2perm(start, SourceId(u.source_count() - 1));
    start.pinned_prefix = 1;
    OnlinePermOptions opts;
    std::vector<PermState> published;
    opts.publish = [&](const PermState& p) { published.push_back(p); };
    auto c = online_perm(q, truth, start, opts);
    CHECK(c.perm.order.front() == SourceId(u.source_count() - 1));
    for (const auto& p : published) CHECK(p.order.front() == SourceId(u.source_count() - 1));
  }
}

TEST_CASE("shared slot versions only grow") {
  SharedSlot<int> slot;
  CHECK(slot.read().value == nullptr);
  auto v1 = slot.write(3);
  auto v2 = slot.write(4);
  CHECK(v2 > v1);
  auto r = slot.read();
  CHECK(*r.value == 4);
  CHECK(r.version == v2);
}

TEST_CASE("algorithm names round-trip") {
  for (auto k : {AlgoKind::Random, AlgoKind::MaxT, AlgoKind::MaxRT, AlgoKind::MinT, AlgoKind::MinRT,
                 AlgoKind::GreedyQR, AlgoKind::SeqPerm, AlgoKind::OnlinePerm, AlgoKind::FullKnowledge,
                 AlgoKind::BruteForce}) {
    CHECK(parse_algo(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_algo("Fastest"), Error);
}
