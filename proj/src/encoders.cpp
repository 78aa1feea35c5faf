#include "mgcot/encoders.hpp"

#include "mgcot/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mgcot {

void init_uniform(Parameter& p, int dim, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  if (p.frozen_row >= 0) p.value.row(p.frozen_row).setZero();
}

SessionGraphBatch build_session_graph_batch(const std::vector<std::vector<int>>& sessions) {
  SessionGraphBatch out;
  out.positions.push_back(0);
  std::vector<Eigen::Triplet<double>> tin, tout;
  int base = 0;
  for (const auto& s : sessions) {
    if (s.empty()) throw DataError("session graph batch: empty session");
    const CurrentSessionGraph g = build_current_graph(s);
    const int n = static_cast<int>(g.nodes.size());
    out.node_items.insert(out.node_items.end(), g.nodes.begin(), g.nodes.end());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (g.a_in(i, j) != 0.0) tin.emplace_back(base + i, base + j, g.a_in(i, j));
        if (g.a_out(i, j) != 0.0) tout.emplace_back(base + i, base + j, g.a_out(i, j));
      }
    }
    for (int a : g.alias) out.position_node.push_back(base + a);
    out.positions.push_back(static_cast<int>(out.position_node.size()));
    base += n;
  }
  auto a_in = std::make_shared<SparseMatrix>(base, base);
  auto a_out = std::make_shared<SparseMatrix>(base, base);
  a_in->setFromTriplets(tin.begin(), tin.end());
  a_out->setFromTriplets(tout.begin(), tout.end());
  out.a_in = std::move(a_in);
  out.a_out = std::move(a_out);
  return out;
}

Ggnn::Ggnn(ParameterStore& store, const std::string& prefix, int dim, int steps)
    : dim_(dim), steps_(steps) {
  if (dim < 1) throw ConfigError("ggnn: dim must be >= 1");
  if (steps < 0) throw ConfigError("ggnn: steps must be >= 0");
  w_in_ = &store.add(prefix + ".w_in", dim, dim);
  b_in_ = &store.add(prefix + ".b_in", 1, dim);
  w_out_ = &store.add(prefix + ".w_out", dim, dim);
  b_out_ = &store.add(prefix + ".b_out", 1, dim);
  w_ih_ = &store.add(prefix + ".w_ih", 2 * dim, 3 * dim);
  b_ih_ = &store.add(prefix + ".b_ih", 1, 3 * dim);
  w_hh_ = &store.add(prefix + ".w_hh", dim, 3 * dim);
  b_hh_ = &store.add(prefix + ".b_hh", 1, 3 * dim);
  for (Parameter* p : {b_in_, b_out_, b_ih_, b_hh_}) p->decay = false;
}

std::vector<Parameter*> Ggnn::parameters() const {
  return {w_in_, b_in_, w_out_, b_out_, w_ih_, b_ih_, w_hh_, b_hh_};
}

ad::Var Ggnn::forward(ad::Tape& tape, const ad::Var& nodes, std::shared_ptr<const SparseMatrix> a_in,
                      std::shared_ptr<const SparseMatrix> a_out) const {
  using namespace ad;
  if (nodes.cols() != dim_) throw ShapeError("ggnn: node width differs from dim");
  if (a_in->rows() != nodes.rows() || a_out->rows() != nodes.rows())
    throw ShapeError("ggnn: adjacency size differs from node count");
  if (steps_ == 0) return nodes;
  const Var w_in = tape.param(*w_in_), b_in = tape.param(*b_in_);
  const Var w_out = tape.param(*w_out_), b_out = tape.param(*b_out_);
  const Var w_ih = tape.param(*w_ih_), b_ih = tape.param(*b_ih_);
  const Var w_hh = tape.param(*w_hh_), b_hh = tape.param(*b_hh_);
  const Index d = dim_;
  Var h = nodes;
  for (int step = 0; step < steps_; ++step) {
    const Var msg_in = spmm(a_in, linear(h, w_in, b_in));
    const Var msg_out = spmm(a_out, linear(h, w_out, b_out));
    const Var gi = linear(concat_cols(msg_in, msg_out), w_ih, b_ih);
    const Var gh = linear(h, w_hh, b_hh);
    const Var r = sigmoid(add(slice_cols(gi, 0, d), slice_cols(gh, 0, d)));
    const Var z = sigmoid(add(slice_cols(gi, d, d), slice_cols(gh, d, d)));
    const Var n = tanh(add(slice_cols(gi, 2 * d, d), mul(r, slice_cols(gh, 2 * d, d))));
    h = add(n, mul(z, sub(h, n)));
  }
  return h;
}

ad::Var ggnn_encode(ad::Tape& tape, const Ggnn& ggnn, const CurrentSessionGraph& graph,
                    const ad::Var& item_embeddings) {
  const int n = static_cast<int>(graph.nodes.size());
  std::vector<Eigen::Triplet<double>> tin, tout;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (graph.a_in(i, j) != 0.0) tin.emplace_back(i, j, graph.a_in(i, j));
      if (graph.a_out(i, j) != 0.0) tout.emplace_back(i, j, graph.a_out(i, j));
    }
  auto a_in = std::make_shared<SparseMatrix>(n, n);
  auto a_out = std::make_shared<SparseMatrix>(n, n);
  a_in->setFromTriplets(tin.begin(), tin.end());
  a_out->setFromTriplets(tout.begin(), tout.end());
  return ggnn.forward(tape, ad::gather_rows(item_embeddings, graph.nodes), a_in, a_out);
}

SparseMatrix normalized_adjacency(const GlobalItemGraph& graph) {
  const int n = graph.n_items + 1;
  if (static_cast<int>(graph.rows.size()) != n)
    throw ShapeError("normalized_adjacency: row count differs from n_items + 1");
  // Symmetrize with max, then add self loops.
  std::vector<std::vector<std::pair<int, double>>> sym(n);
  for (int s = 0; s < n; ++s)
    for (const PathEntry& e : graph.rows[s]) {
      sym[s].emplace_back(e.target, e.weight);
      sym[e.target].emplace_back(s, e.weight);
    }
  std::vector<double> degree(n, 0.0);
  for (int s = 0; s < n; ++s) {
    auto& row = sym[s];
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second > b.second;
    });
    row.erase(std::unique(row.begin(), row.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              row.end());
    degree[s] = 1.0;
    for (const auto& [t, w] : row)
      if (t != s) degree[s] += w;
  }
  std::vector<double> inv_sqrt(n);
  for (int s = 0; s < n; ++s) inv_sqrt[s] = 1.0 / std::sqrt(degree[s]);
  // w * (inv_sqrt[s] * inv_sqrt[t]) is bitwise symmetric in (s, t).
  std::vector<Eigen::Triplet<double>> trip;
  for (int s = 0; s < n; ++s) {
    trip.emplace_back(s, s, inv_sqrt[s] * inv_sqrt[s]);
    for (const auto& [t, w] : sym[s])
      if (t != s) trip.emplace_back(s, t, w * (inv_sqrt[s] * inv_sqrt[t]));
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

SparseMatrix select_rows(const SparseMatrix& m, std::span<const int> rows) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= m.rows()) throw ShapeError("select_rows: row index out of range");
    for (SparseMatrix::InnerIterator it(m, rows[r]); it; ++it)
      trip.emplace_back(static_cast<int>(r), static_cast<int>(it.col()), it.value());
  }
  SparseMatrix out(static_cast<Index>(rows.size()), m.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

SparseMatrix dropout_entries(const SparseMatrix& m, double rate, std::mt19937_64& rng) {
  SparseMatrix out = m;
  if (rate <= 0.0) return out;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (Index k = 0; k < out.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(out, k); it; ++it) it.valueRef() = keep(rng) ? it.value() * s : 0.0;
  return out;
}

Gcn::Gcn(ParameterStore& store, const std::string& prefix, int dim, bool relu) : relu_(relu) {
  if (dim < 1) throw ConfigError("gcn: dim must be >= 1");
  w_ = &store.add(prefix + ".w", dim, dim);
}

ad::Var Gcn::forward(ad::Tape& tape, std::shared_ptr<const SparseMatrix> adj,
                     const ad::Var& item_embeddings) const {
  if (adj->cols() != item_embeddings.rows())
    throw ShapeError("gcn: adjacency columns differ from embedding rows");
  const ad::Var out = ad::matmul(ad::spmm(std::move(adj), item_embeddings), tape.param(*w_));
  return relu_ ? ad::relu(out) : out;
}

ad::Var gcn_encode(ad::Tape& tape, const Gcn& gcn, std::shared_ptr<const SparseMatrix> adj,
                   const ad::Var& item_embeddings) {
  if (adj->rows() != adj->cols()) throw ShapeError("gcn_encode: adjacency must be square");
  return gcn.forward(tape, std::move(adj), item_embeddings);
}

int reverse_position(int length, int t, int max_position) {
  return std::min(length - t, max_position);
}

ad::Var assemble_global_sequence(const ad::Var& item_states, const std::vector<int>& item_row,
                                 const ad::Var& positions, const ad::Offsets& offsets,
                                 int max_position) {
  if (offsets.empty() || offsets.back() != static_cast<int>(item_row.size()))
    throw ShapeError("assemble_global_sequence: offsets do not cover item rows");
  std::vector<int> pos(item_row.size());
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    const int len = offsets[b + 1] - offsets[b];
    for (int t = 0; t < len; ++t) pos[offsets[b] + t] = reverse_position(len, t, max_position);
  }
  return ad::concat_cols(ad::gather_rows(item_states, item_row), ad::gather_rows(positions, std::move(pos)));
}

}  // namespace mgcot
