#include "doctest.h"
#include "oracles.hpp"

#include "mgcot/graphs.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

using namespace mgcot;
using namespace mgcot::testing;

TEST_CASE("current graph reproduces the arrival-count example") {
  const std::vector<int> s{2, 4, 5, 8, 4};
  const CurrentSessionGraph g = build_current_graph(s);
  const std::vector<SessionEdge> expected{{2, 4, 1}, {4, 5, 1}, {5, 8, 1}, {8, 4, 2}};
  CHECK(g.edges() == expected);
  CHECK(g.nodes == std::vector<int>{2, 4, 5, 8});
  CHECK(g.alias == std::vector<int>{0, 1, 2, 3, 1});
}

TEST_CASE("distinct orderings give distinct weighted graphs") {
  const std::vector<int> s1{2, 4, 5, 5, 4, 4}, s2{2, 4, 4, 5, 5, 4};
  const auto e1 = build_current_graph(s1).edges(), e2 = build_current_graph(s2).edges();
  CHECK(e1 == replay_arrival_edges(s1));
  CHECK(e2 == replay_arrival_edges(s2));
  CHECK(e1 != e2);
}

TEST_CASE("all-distinct session has unit weights") {
  for (const auto& e : build_current_graph(std::vector<int>{7, 3, 9}).edges()) CHECK(e.weight == 1);
}

TEST_CASE("current graph matches replay oracle and normalizes rows") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> item(1, 6), len(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> s(len(rng));
    for (int& x : s) x = item(rng);
    const CurrentSessionGraph g = build_current_graph(s);
    REQUIRE(g.edges() == replay_arrival_edges(s));
    for (std::size_t p = 0; p < s.size(); ++p) REQUIRE(g.nodes[g.alias[p]] == s[p]);
    const Index n = static_cast<Index>(g.nodes.size());
    for (Index i = 0; i < n; ++i) {
      const double out = g.a_out.row(i).sum(), in = g.a_in.row(i).sum();
      REQUIRE((out == 0.0 || std::abs(out - 1.0) < 1e-12));
      REQUIRE((in == 0.0 || std::abs(in - 1.0) < 1e-12));
    }
  }
}

TEST_CASE("arrival weights at a node are 1..m over distinct predecessors") {
  const std::vector<int> s{1, 2, 3, 2, 1, 2};
  std::map<int, std::vector<int>> incoming;
  for (const auto& e : build_current_graph(s).edges()) incoming[e.to].push_back(e.weight);
  auto w2 = incoming[2];
  std::sort(w2.begin(), w2.end());
  CHECK(w2 == std::vector<int>{2, 3});  // 1->2 keeps max(1, 3); 3->2 has 2
}

TEST_CASE("co-occurrence counts adjacent pairs symmetrically") {
  const std::vector<Session> two{{"x", {1, 2}, 0, SplitTag::train}, {"y", {2, 1}, 1, SplitTag::train}};
  const ItemGraph g = build_global_cooccurrence(two, 2);
  CHECK(g.weight(1, 2) == 2);
  CHECK(g.weight(2, 1) == 2);
  const ItemGraph self = build_global_cooccurrence({{"z", {1, 1}, 0, SplitTag::train}}, 1);
  CHECK(self.edge_count() == 0);

  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> item(1, 15), len(2, 8);
  std::vector<Session> sessions;
  std::map<std::pair<int, int>, std::int64_t> counts;
  for (int i = 0; i < 100; ++i) {
    Session s;
    s.items.resize(len(rng));
    for (int& x : s.items) x = item(rng);
    for (std::size_t t = 0; t + 1 < s.items.size(); ++t) {
      const int a = s.items[t], b = s.items[t + 1];
      if (a != b) ++counts[{std::min(a, b), std::max(a, b)}];
    }
    sessions.push_back(s);
  }
  const ItemGraph big = build_global_cooccurrence(sessions, 15);
  for (int a = 1; a <= 15; ++a)
    for (int b = 1; b <= 15; ++b) {
      if (a == b) continue;
      const auto it = counts.find({std::min(a, b), std::max(a, b)});
      REQUIRE(big.weight(a, b) == (it == counts.end() ? 0 : it->second));
    }
}

TEST_CASE("single maximal edge reweights to 1") {
  ItemGraph g;
  g.n_items = 2;
  g.adj = {{}, {{2, 5}}, {{1, 5}}};
  const GlobalItemGraph r = reweight_shortest_path(g, 0);
  REQUIRE(r.rows[1].size() == 1);
  CHECK(r.rows[1][0].target == 2);
  CHECK(r.rows[1][0].cost == 0);
  CHECK(r.rows[1][0].weight == 1.0);
}

TEST_CASE("triangle prefers the heavy chain") {
  ItemGraph g;
  g.n_items = 3;
  g.adj = {{}, {{2, 3}, {3, 1}}, {{1, 3}, {3, 3}}, {{1, 1}, {2, 3}}};
  const auto d = truncated_dijkstra(g, 3, 1, 0);
  const std::vector<std::pair<int, std::int64_t>> expected{{2, 0}, {3, 0}};
  CHECK(d == expected);
  CHECK(floyd_warshall_costs(g)[1][3] == 0);
}

TEST_CASE("shortest-path costs equal Floyd-Warshall and reweighting reverses order") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> size(2, 30);
  std::uniform_real_distribution<double> prob(0.05, 0.4);
  for (int trial = 0; trial < 100; ++trial) {
    const ItemGraph g = random_cooccurrence_graph(size(rng), prob(rng), 9, rng);
    const auto fw = floyd_warshall_costs(g);
    const GlobalItemGraph r = reweight_shortest_path(g, 0);
    std::vector<std::pair<std::int64_t, double>> pairs;
    for (int s = 1; s <= g.n_items; ++s) {
      std::set<int> seen;
      for (const PathEntry& e : r.rows[s]) {
        REQUIRE(fw[s][e.target] == e.cost);
        seen.insert(e.target);
        pairs.emplace_back(e.cost, e.weight);
      }
      for (int t = 1; t <= g.n_items; ++t)
        if (t != s) REQUIRE((fw[s][t] != kUnreachable) == (seen.count(t) == 1));
    }
    for (const auto& [c1, w1] : pairs)
      for (const auto& [c2, w2] : pairs)
        if (c1 < c2) REQUIRE(w1 > w2);
  }
}

TEST_CASE("cap keeps the cheapest targets and parallel equals serial") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const ItemGraph g = random_cooccurrence_graph(40, 0.15, 6, rng);
    const auto fw = floyd_warshall_costs(g);
    for (int cap : {0, 1, 3, 10}) {
      const GlobalItemGraph par = reweight_shortest_path(g, cap), ser = reweight_shortest_path_serial(g, cap);
      REQUIRE(par.rows.size() == ser.rows.size());
      for (std::size_t s = 0; s < par.rows.size(); ++s) {
        REQUIRE(par.rows[s].size() == ser.rows[s].size());
        for (std::size_t i = 0; i < par.rows[s].size(); ++i) {
          REQUIRE(par.rows[s][i].target == ser.rows[s][i].target);
          REQUIRE(par.rows[s][i].weight == ser.rows[s][i].weight);
        }
      }
      if (cap <= 0) continue;
      for (int s = 1; s <= g.n_items; ++s) {
        std::vector<std::pair<std::int64_t, int>> all;
        for (int t = 1; t <= g.n_items; ++t)
          if (t != s && fw[s][t] != kUnreachable) all.emplace_back(fw[s][t], t);
        std::sort(all.begin(), all.end());
        const std::size_t keep = std::min<std::size_t>(all.size(), static_cast<std::size_t>(cap));
        REQUIRE(par.rows[s].size() == keep);
        for (std::size_t i = 0; i < keep; ++i) {
          REQUIRE(par.rows[s][i].cost == all[i].first);
          REQUIRE(par.rows[s][i].target == all[i].second);
        }
      }
    }
  }
}

TEST_CASE("empty co-occurrence graph gives an empty global graph") {
  ItemGraph g;
  g.n_items = 4;
  g.adj.assign(5, {});
  CHECK(reweight_shortest_path(g, 0).edge_count() == 0);
}

TEST_CASE("global graph save/load roundtrip") {
  std::mt19937_64 rng(25);
  const GlobalItemGraph r = reweight_shortest_path(random_cooccurrence_graph(25, 0.2, 7, rng), 5);
  const auto path = std::filesystem::temp_directory_path() / "mgcot_graph_roundtrip.txt";
  save_global_graph(r, path);
  const GlobalItemGraph back = load_global_graph(path);
  std::filesystem::remove(path);
  CHECK(back.n_items == r.n_items);
  CHECK(back.cap == r.cap);
  CHECK(back.max_cost == r.max_cost);
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t s = 0; s < r.rows.size(); ++s) {
    REQUIRE(back.rows[s].size() == r.rows[s].size());
    for (std::size_t i = 0; i < r.rows[s].size(); ++i) {
      CHECK(back.rows[s][i].target == r.rows[s][i].target);
      CHECK(back.rows[s][i].cost == r.rows[s][i].cost);
      CHECK(back.rows[s][i].weight == r.rows[s][i].weight);
    }
  }
}

TEST_CASE("jaccard and local session graph") {
  CHECK(jaccard(std::vector<int>{1, 2, 3}, std::vector<int>{2, 3, 4}) == 0.5);
  CHECK(jaccard(std::vector<int>{1, 2}, std::vector<int>{3}) == 0.0);
  CHECK(item_set(std::vector<int>{3, 1, 3, 2}) == std::vector<int>{1, 2, 3});

  const LocalSessionGraph disjoint = build_local_session_graph({{1, 2}, {3, 4}}, 3);
  CHECK(disjoint.neighbors[0].empty());
  CHECK(disjoint.neighbors[1].empty());

  std::mt19937_64 rng(26);
  std::uniform_int_distribution<int> item(1, 12), len(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<int>> sets(8);
    for (auto& s : sets) {
      std::vector<int> raw(len(rng));
      for (int& x : raw) x = item(rng);
      s = item_set(raw);
    }
    const LocalSessionGraph g = build_local_session_graph(sets, 3);
    REQUIRE(g.neighbors == build_local_session_graph_serial(sets, 3).neighbors);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      std::vector<Neighbor> all;
      const std::set<int> a(sets[i].begin(), sets[i].end());
      for (std::size_t j = 0; j < sets.size(); ++j) {
        if (i == j) continue;
        std::size_t inter = 0;
        std::set<int> uni = a;
        for (int x : sets[j]) {
          inter += a.count(x);
          uni.insert(x);
        }
        if (inter > 0)
          all.push_back({static_cast<int>(j), static_cast<double>(inter) / static_cast<double>(uni.size())});
      }
      std::sort(all.begin(), all.end(), [](const Neighbor& x, const Neighbor& y) {
        return x.weight != y.weight ? x.weight > y.weight : x.index < y.index;
      });
      if (all.size() > 3) all.resize(3);
      REQUIRE(g.neighbors[i] == all);
    }
  }
}
