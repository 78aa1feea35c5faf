#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mgcot::testing {

std::vector<std::vector<std::int64_t>> floyd_warshall_costs(const ItemGraph& graph) {
  const int n = graph.n_items + 1;
  const std::int64_t wmax = graph.max_weight();
  std::vector<std::vector<std::int64_t>> d(n, std::vector<std::int64_t>(n, kUnreachable));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (int a = 0; a < n; ++a)
    for (const auto& [b, w] : graph.adj[a]) d[a][b] = std::min(d[a][b], wmax - w);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      if (d[i][k] == kUnreachable) continue;
      for (int j = 0; j < n; ++j)
        if (d[k][j] != kUnreachable && d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
    }
  return d;
}

ItemGraph random_cooccurrence_graph(int n, double edge_prob, int max_weight, std::mt19937_64& rng) {
  ItemGraph g;
  g.n_items = n;
  g.adj.assign(n + 1, {});
  std::bernoulli_distribution edge(edge_prob);
  std::uniform_int_distribution<int> weight(1, max_weight);
  for (int a = 1; a <= n; ++a)
    for (int b = a + 1; b <= n; ++b)
      if (edge(rng)) {
        const int w = weight(rng);
        g.adj[a].emplace_back(b, w);
        g.adj[b].emplace_back(a, w);
      }
  for (auto& row : g.adj) std::sort(row.begin(), row.end());
  return g;
}

std::vector<double> sparsemax_oracle(const std::vector<double>& z) {
  std::vector<double> s = z;
  std::sort(s.rbegin(), s.rend());
  double cum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s[k] > t) tau = t;
  }
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

std::vector<double> softmax_oracle(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp(z[i] - m);
  for (double& x : p) x /= total;
  return p;
}

std::vector<SessionEdge> replay_arrival_edges(const std::vector<int>& session) {
  std::map<int, int> arrivals;
  std::map<std::pair<int, int>, int> best;
  for (std::size_t t = 0; t + 1 < session.size(); ++t) {
    const int m = ++arrivals[session[t + 1]];
    int& w = best[{session[t], session[t + 1]}];
    w = std::max(w, m);
  }
  std::vector<SessionEdge> out;
  for (const auto& [key, w] : best) out.push_back({key.first, key.second, w});
  return out;
}

double cross_entropy_oracle(const Matrix& scores, const std::vector<int>& labels) {
  double total = 0.0;
  for (Index r = 0; r < scores.rows(); ++r) {
    double m = scores(r, 0);
    for (Index c = 1; c < scores.cols(); ++c) m = std::max(m, scores(r, c));
    double s = 0.0;
    for (Index c = 0; c < scores.cols(); ++c) s += std::exp(scores(r, c) - m);
    total += m + std::log(s) - scores(r, labels[static_cast<std::size_t>(r)] - 1);
  }
  return total / static_cast<double>(scores.rows());
}

double contrastive_oracle(const Matrix& r, const Matrix& g, const std::vector<int>& perm, double tau) {
  auto log_sigma = [](double x) { return -std::log1p(std::exp(-x)); };
  double total = 0.0;
  for (Index i = 0; i < r.rows(); ++i) {
    double sp = 0.0, sn = 0.0;
    for (Index c = 0; c < r.cols(); ++c) {
      sp += r(i, c) * g(i, c);
      sn += r(i, c) * g(perm[static_cast<std::size_t>(i)], c);
    }
    total += -log_sigma(sp / tau) - log_sigma(-sn / tau);
  }
  return total / static_cast<double>(r.rows());
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace mgcot::testing
