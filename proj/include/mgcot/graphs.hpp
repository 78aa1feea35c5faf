#pragma once

// The three graph views: per-session arrival-count graph, corpus-wide
// shortest-path item graph, and batch-level Jaccard session graph.

#include "mgcot/dataio.hpp"
#include "mgcot/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <tuple>
#include <vector>

namespace mgcot {

struct SessionEdge {
  int from = 0;  // item index
  int to = 0;
  int weight = 0;
  bool operator==(const SessionEdge&) const = default;
  auto operator<=>(const SessionEdge&) const = default;
};

struct CurrentSessionGraph {
  std::vector<int> nodes;  // unique items, first-appearance order
  std::vector<int> alias;  // position -> node slot
  Matrix weights;          // weights(i, j): raw weight of slot i -> slot j, 0 if absent
  Matrix a_in;             // a_in(i, j) = weights(j, i) / sum_j' weights(j', i)
  Matrix a_out;            // a_out(i, j) = weights(i, j) / sum_j' weights(i, j')

  // Edges sorted by (from, to).
  std::vector<SessionEdge> edges() const;
};

// Transition v_t -> v_{t+1} gets weight m when it is the m-th time v_{t+1}
// is entered; repeated transitions keep the largest such m.
CurrentSessionGraph build_current_graph(std::span<const int> session);

// Integer co-occurrence weights over items 1..n_items; index 0 unused.
struct ItemGraph {
  int n_items = 0;
  bool directed = false;
  std::vector<std::vector<std::pair<int, std::int64_t>>> adj;  // sorted by target

  std::int64_t max_weight() const;
  std::size_t edge_count() const;
  std::int64_t weight(int a, int b) const;
};

// Adjacent pairs (window 1) accumulate weight 1; self pairs are skipped.
// Undirected graphs store both orientations.
ItemGraph build_global_cooccurrence(const std::vector<Session>& train, int n_items,
                                    bool directed = false);

struct PathEntry {
  int target = 0;
  std::int64_t cost = 0;
  double weight = 0.0;
};

struct GlobalItemGraph {
  int n_items = 0;
  int cap = 0;  // <= 0: uncapped
  int window = 1;
  bool directed = false;
  std::int64_t max_raw_weight = 0;
  std::int64_t max_cost = 0;  // max retained shortest-path cost
  std::vector<std::vector<PathEntry>> rows;  // rows[source], sorted by (cost, target)

  std::size_t edge_count() const;
};

// Shortest-path costs from `source` over edge costs (max weight - w), in
// settle order (cost, then node index), excluding the source, truncated to
// `cap` entries when cap > 0.
std::vector<std::pair<int, std::int64_t>> truncated_dijkstra(const ItemGraph& graph,
                                                             std::int64_t max_weight, int source,
                                                             int cap);

// All-sources run followed by weight = (max retained cost + 1) - cost.
// OpenMP over sources; reweight_shortest_path_serial is the reference loop.
GlobalItemGraph reweight_shortest_path(const ItemGraph& graph, int cap);
GlobalItemGraph reweight_shortest_path_serial(const ItemGraph& graph, int cap);

inline constexpr int kGlobalGraphFormatVersion = 1;
void save_global_graph(const GlobalItemGraph& graph, const std::filesystem::path& path);
GlobalItemGraph load_global_graph(const std::filesystem::path& path);

struct Neighbor {
  int index = 0;
  double weight = 0.0;
  bool operator==(const Neighbor&) const = default;
};

struct LocalSessionGraph {
  std::vector<std::vector<Neighbor>> neighbors;  // weight desc, then index asc
};

// |A n B| / |A u B| over sorted unique item sets.
double jaccard(std::span<const int> a, std::span<const int> b);

// Sorted unique item set of a sequence.
std::vector<int> item_set(std::span<const int> items);

// Top-k neighbours with J > 0 per session; OpenMP over sessions.
LocalSessionGraph build_local_session_graph(const std::vector<std::vector<int>>& item_sets, int k);
// Brute-force reference: all pairs through std::set_intersection/set_union and a full sort.
LocalSessionGraph build_local_session_graph_serial(const std::vector<std::vector<int>>& item_sets, int k);

}  // namespace mgcot
