#include "mgcot/graphs.hpp"

#include "mgcot/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace mgcot {

std::vector<SessionEdge> CurrentSessionGraph::edges() const {
  std::vector<SessionEdge> out;
  for (Index i = 0; i < weights.rows(); ++i)
    for (Index j = 0; j < weights.cols(); ++j)
      if (weights(i, j) > 0)
        out.push_back({nodes[static_cast<std::size_t>(i)], nodes[static_cast<std::size_t>(j)],
                       static_cast<int>(weights(i, j))});
  std::sort(out.begin(), out.end());
  return out;
}

CurrentSessionGraph build_current_graph(std::span<const int> session) {
  CurrentSessionGraph g;
  std::unordered_map<int, int> slot;
  for (int v : session) {
    auto [it, inserted] = slot.try_emplace(v, static_cast<int>(g.nodes.size()));
    if (inserted) g.nodes.push_back(v);
    g.alias.push_back(it->second);
  }
  const auto n = static_cast<Index>(g.nodes.size());
  g.weights = Matrix::Zero(n, n);
  std::vector<int> arrivals(static_cast<std::size_t>(n), 0);
  for (std::size_t t = 0; t + 1 < g.alias.size(); ++t) {
    const int from = g.alias[t], to = g.alias[t + 1];
    const int m = ++arrivals[static_cast<std::size_t>(to)];
    g.weights(from, to) = std::max(g.weights(from, to), static_cast<double>(m));
  }
  g.a_in = Matrix::Zero(n, n);
  g.a_out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    const double in_sum = g.weights.col(i).sum();
    const double out_sum = g.weights.row(i).sum();
    if (in_sum > 0) g.a_in.row(i) = g.weights.col(i).transpose() / in_sum;
    if (out_sum > 0) g.a_out.row(i) = g.weights.row(i) / out_sum;
  }
  return g;
}

std::int64_t ItemGraph::max_weight() const {
  std::int64_t m = 0;
  for (const auto& row : adj)
    for (const auto& [t, w] : row) m = std::max(m, w);
  return m;
}

std::size_t ItemGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& row : adj) n += row.size();
  return n;
}

std::int64_t ItemGraph::weight(int a, int b) const {
  const auto& row = adj[static_cast<std::size_t>(a)];
  const auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(b, std::int64_t{0}),
                                   [](const auto& x, const auto& y) { return x.first < y.first; });
  return (it != row.end() && it->first == b) ? it->second : 0;
}

ItemGraph build_global_cooccurrence(const std::vector<Session>& train, int n_items, bool directed) {
  std::vector<std::map<int, std::int64_t>> acc(static_cast<std::size_t>(n_items) + 1);
  for (const auto& s : train) {
    for (std::size_t t = 0; t + 1 < s.items.size(); ++t) {
      const int a = s.items[t], b = s.items[t + 1];
      if (a == b) continue;
      if (a < 1 || b < 1 || a > n_items || b > n_items) throw DataError("co-occurrence: item outside vocabulary");
      ++acc[static_cast<std::size_t>(a)][b];
      if (!directed) ++acc[static_cast<std::size_t>(b)][a];
    }
  }
  ItemGraph g;
  g.n_items = n_items;
  g.directed = directed;
  g.adj.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) g.adj[i].assign(acc[i].begin(), acc[i].end());
  return g;
}

std::size_t GlobalItemGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.size();
  return n;
}

std::vector<std::pair<int, std::int64_t>> truncated_dijkstra(const ItemGraph& graph,
                                                             std::int64_t max_weight, int source,
                                                             int cap) {
  using Entry = std::pair<std::int64_t, int>;  // (cost, node)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  std::unordered_map<int, std::int64_t> dist;
  std::vector<std::pair<int, std::int64_t>> settled;
  std::unordered_map<int, bool> done;
  dist[source] = 0;
  pq.emplace(0, source);
  // Once the cap is reached every node tied at the boundary cost is still settled so that
  // the kept prefix is ordered by (cost, id) regardless of discovery order.
  std::int64_t bound = -1;
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    if (bound >= 0 && d > bound) break;
    pq.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u != source) {
      settled.emplace_back(u, d);
      if (cap > 0 && bound < 0 && static_cast<int>(settled.size()) >= cap) bound = d;
    }
    for (const auto& [v, w] : graph.adj[static_cast<std::size_t>(u)]) {
      const std::int64_t nd = d + (max_weight - w);
      auto it = dist.find(v);
      if (it == dist.end() || nd < it->second) {
        dist[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  if (bound >= 0) {
    std::sort(settled.begin(), settled.end(),
              [](const auto& a, const auto& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
    settled.resize(static_cast<std::size_t>(cap));
  }
  return settled;
}

namespace {

GlobalItemGraph finish_reweight(const ItemGraph& graph, int cap,
                                std::vector<std::vector<std::pair<int, std::int64_t>>>&& paths) {
  GlobalItemGraph out;
  out.n_items = graph.n_items;
  out.cap = cap;
  out.directed = graph.directed;
  out.max_raw_weight = graph.max_weight();
  for (const auto& row : paths)
    for (const auto& [t, c] : row) out.max_cost = std::max(out.max_cost, c);
  out.rows.resize(paths.size());
  for (std::size_t s = 0; s < paths.size(); ++s)
    for (const auto& [t, c] : paths[s])
      out.rows[s].push_back({t, c, static_cast<double>(out.max_cost + 1 - c)});
  return out;
}

}  // namespace

GlobalItemGraph reweight_shortest_path(const ItemGraph& graph, int cap) {
  const std::int64_t maxw = graph.max_weight();
  std::vector<std::vector<std::pair<int, std::int64_t>>> paths(graph.adj.size());
  const int n = static_cast<int>(graph.adj.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (int s = 1; s < n; ++s)
    if (!graph.adj[static_cast<std::size_t>(s)].empty())
      paths[static_cast<std::size_t>(s)] = truncated_dijkstra(graph, maxw, s, cap);
  return finish_reweight(graph, cap, std::move(paths));
}

GlobalItemGraph reweight_shortest_path_serial(const ItemGraph& graph, int cap) {
  const std::int64_t maxw = graph.max_weight();
  std::vector<std::vector<std::pair<int, std::int64_t>>> paths(graph.adj.size());
  for (std::size_t s = 1; s < graph.adj.size(); ++s)
    if (!graph.adj[s].empty()) paths[s] = truncated_dijkstra(graph, maxw, static_cast<int>(s), cap);
  return finish_reweight(graph, cap, std::move(paths));
}

void save_global_graph(const GlobalItemGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write global graph: " + path.string());
  out << "# mgcot-global-graph " << kGlobalGraphFormatVersion << '\n'
      << "# n_items " << g.n_items << '\n'
      << "# cap " << g.cap << '\n'
      << "# window " << g.window << '\n'
      << "# directed " << (g.directed ? 1 : 0) << '\n'
      << "# max_raw_weight " << g.max_raw_weight << '\n'
      << "# max_cost " << g.max_cost << '\n';
  for (std::size_t s = 0; s < g.rows.size(); ++s)
    for (const auto& e : g.rows[s]) out << s << ' ' << e.target << ' ' << static_cast<std::int64_t>(e.weight) << '\n';
}

GlobalItemGraph load_global_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read global graph: " + path.string());
  GlobalItemGraph g;
  std::string line;
  int version = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "mgcot-global-graph") ls >> version;
      else if (key == "n_items") {
        ls >> g.n_items;
        g.rows.assign(static_cast<std::size_t>(g.n_items) + 1, {});
      } else if (key == "cap") ls >> g.cap;
      else if (key == "window") ls >> g.window;
      else if (key == "directed") {
        int d = 0;
        ls >> d;
        g.directed = d != 0;
      } else if (key == "max_raw_weight") ls >> g.max_raw_weight;
      else if (key == "max_cost") ls >> g.max_cost;
      continue;
    }
    if (version != kGlobalGraphFormatVersion) throw SchemaError("unsupported global graph version");
    int s = 0, t = 0;
    std::int64_t w = 0;
    if (!(ls >> s >> t >> w) || s < 1 || s > g.n_items || t < 1 || t > g.n_items)
      throw SchemaError("bad global graph edge line: " + line);
    g.rows[static_cast<std::size_t>(s)].push_back({t, g.max_cost + 1 - w, static_cast<double>(w)});
  }
  if (version != kGlobalGraphFormatVersion) throw SchemaError("missing global graph header");
  return g;
}

std::vector<int> item_set(std::span<const int> items) {
  std::vector<int> s(items.begin(), items.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

double jaccard(std::span<const int> a, std::span<const int> b) {
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) ++i;
    else if (b[j] < a[i]) ++j;
    else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

bool neighbor_before(const Neighbor& x, const Neighbor& y) {
  if (x.weight != y.weight) return x.weight > y.weight;
  return x.index < y.index;
}

}  // namespace

LocalSessionGraph build_local_session_graph(const std::vector<std::vector<int>>& sets, int k) {
  if (k < 1) throw ConfigError("local graph: k must be >= 1");
  const int n = static_cast<int>(sets.size());
  LocalSessionGraph g;
  g.neighbors.resize(sets.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < n; ++i) {
    std::vector<Neighbor> cand;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = jaccard(sets[static_cast<std::size_t>(i)], sets[static_cast<std::size_t>(j)]);
      if (w > 0.0) cand.push_back({j, w});
    }
    const auto keep = std::min<std::size_t>(cand.size(), static_cast<std::size_t>(k));
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), neighbor_before);
    cand.resize(keep);
    g.neighbors[static_cast<std::size_t>(i)] = std::move(cand);
  }
  return g;
}

LocalSessionGraph build_local_session_graph_serial(const std::vector<std::vector<int>>& sets, int k) {
  if (k < 1) throw ConfigError("local graph: k must be >= 1");
  LocalSessionGraph g;
  g.neighbors.resize(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::vector<Neighbor> all;
    for (std::size_t j = 0; j < sets.size(); ++j) {
      if (i == j) continue;
      std::vector<int> inter, uni;
      std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(), std::back_inserter(inter));
      std::set_union(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(), std::back_inserter(uni));
      if (inter.empty()) continue;
      all.push_back({static_cast<int>(j), static_cast<double>(inter.size()) / static_cast<double>(uni.size())});
    }
    std::sort(all.begin(), all.end(), neighbor_before);
    if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
    g.neighbors[i] = std::move(all);
  }
  return g;
}

}  // namespace mgcot
