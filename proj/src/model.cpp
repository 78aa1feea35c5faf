#include "mgcot/model.hpp"

#include "mgcot/errors.hpp"

#include <algorithm>

namespace mgcot {

using namespace ad;

MgcotModel::MgcotModel(const ModelConfig& cfg, int n_items, std::uint64_t init_seed)
    : cfg_(cfg), n_items_(n_items) {
  cfg_.validate();
  if (n_items < 1) throw ConfigError("model: n_items must be >= 1");
  const int d = cfg_.embedding_dim, w = cfg_.width();
  items_ = &store_.add("item_embedding", n_items + 1, d);
  items_->frozen_row = 0;
  if (cfg_.split_global_table) {
    global_items_ = &store_.add("global_item_embedding", n_items + 1, d);
    global_items_->frozen_row = 0;
  }
  positions_ = &store_.add("position_embedding", cfg_.max_position + 1, d);
  target_token_ = &store_.add("target_token", 1, d);
  projection_ = &store_.add("projection", w, d);
  ggnn_ = std::make_unique<Ggnn>(store_, "ggnn", d, cfg_.ggnn_steps);
  AttentionConfig acfg;
  acfg.width = w;
  acfg.heads = cfg_.heads;
  acfg.dropout = cfg_.dropout;
  acfg.layer_norm = cfg_.layer_norm;
  acfg.entmax.bisection_iters = cfg_.entmax_iters;
  mha_ = std::make_unique<MultiHeadSparseAttention>(store_, "attention", acfg);
  fusion_ = std::make_unique<NeighborFusion>(store_, "fusion", w);
  gcn_ = std::make_unique<Gcn>(store_, "gcn", d, cfg_.gcn_relu);
  target_attention_ = std::make_unique<TargetAttention>(store_, "target_attention", w, acfg.entmax);

  std::mt19937_64 rng(derive_seed(init_seed, 0x494e4954));
  for (std::size_t i = 0; i < store_.size(); ++i) {
    Parameter& p = store_[i];
    if (p.name.ends_with(".ln_gamma")) p.value.setOnes();
    else if (p.name.ends_with(".ln_beta")) p.value.setZero();
    else init_uniform(p, d, rng);
  }
}

void MgcotModel::set_global_graph(const GlobalItemGraph& graph) {
  if (graph.n_items != n_items_) throw ShapeError("model: global graph item count differs from model");
  set_global_adjacency(std::make_shared<const SparseMatrix>(normalized_adjacency(graph)));
}

void MgcotModel::set_global_adjacency(std::shared_ptr<const SparseMatrix> adj) {
  if (adj->rows() != n_items_ + 1 || adj->cols() != n_items_ + 1)
    throw ShapeError("model: global adjacency must be (n_items + 1) square");
  adj_ = std::move(adj);
}

std::vector<std::string> MgcotModel::global_only_parameters() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < store_.size(); ++i) {
    const std::string& n = store_[i].name;
    if (n.starts_with("gcn.") || n.starts_with("target_attention.") || n == "global_item_embedding")
      out.push_back(n);
  }
  return out;
}

ForwardResult MgcotModel::forward(Tape& tape, const std::vector<std::vector<int>>& prefixes,
                                  const ForwardOptions& opts) const {
  if (prefixes.empty()) throw DataError("model: empty batch");
  for (const auto& p : prefixes) {
    if (p.empty()) throw DataError("model: empty prefix");
    for (int item : p)
      if (item < 1 || item > n_items_) throw DataError("model: item index out of range");
  }
  const int batch = static_cast<int>(prefixes.size());
  const int maxp = cfg_.max_position;

  const SessionGraphBatch graphs = build_session_graph_batch(prefixes);
  const Var items = tape.param(*items_);
  const Var positions = tape.param(*positions_);
  const Var nodes = ggnn_->forward(tape, gather_rows(items, graphs.node_items), graphs.a_in, graphs.a_out);
  const Var steps = gather_rows(nodes, graphs.position_node);

  // Current-view sequences: L item rows then the target token.
  const int total_steps = graphs.positions.back();
  std::vector<int> row_src, row_pos, last_real;
  Offsets cur_offsets{0};
  for (int b = 0; b < batch; ++b) {
    const int begin = graphs.positions[b], len = graphs.positions[b + 1] - begin;
    for (int t = 0; t < len; ++t) {
      row_src.push_back(begin + t);
      row_pos.push_back(reverse_position(len, t, maxp));
    }
    last_real.push_back(static_cast<int>(row_src.size()) - 1);
    row_src.push_back(total_steps);
    row_pos.push_back(0);
    cur_offsets.push_back(static_cast<int>(row_src.size()));
  }
  const Var stacked = concat_rows(steps, tape.param(*target_token_));
  const PackedSequences current{
      concat_cols(gather_rows(stacked, std::move(row_src)), gather_rows(positions, std::move(row_pos))),
      cur_offsets};

  Var h_t;
  if (cfg_.ablation.no_multi_attention) {
    h_t = gather_rows(current.rows, last_real);
  } else {
    const PackedSequences out = mha_->forward(tape, current, opts.training, opts.rng, opts.trace);
    h_t = gather_rows(out.rows, out.last_rows());
  }

  Var fused = h_t;
  if (!cfg_.ablation.no_neighbor_sessions && batch >= 2) {
    std::vector<std::vector<int>> sets;
    sets.reserve(prefixes.size());
    for (const auto& p : prefixes) sets.push_back(item_set(p));
    fused = fusion_->forward(tape, h_t, build_local_session_graph(sets, cfg_.top_k));
  }

  Var h_g;
  if (opts.compute_global) {
    if (!adj_) throw ConfigError("model: global view requested without a global graph");
    std::vector<int> unique_items = graphs.node_items;
    std::sort(unique_items.begin(), unique_items.end());
    unique_items.erase(std::unique(unique_items.begin(), unique_items.end()), unique_items.end());
    auto rows = std::make_shared<SparseMatrix>(select_rows(*adj_, unique_items));
    if (opts.training && cfg_.adj_dropout > 0.0) {
      if (!opts.rng) throw ConfigError("model: adjacency dropout needs an rng");
      *rows = dropout_entries(*rows, cfg_.adj_dropout, *opts.rng);
    }
    const Var table = global_items_ ? tape.param(*global_items_) : items;
    const Var g_items = gcn_->forward(tape, rows, table);
    std::vector<int> item_row;
    item_row.reserve(static_cast<std::size_t>(total_steps));
    for (const auto& p : prefixes)
      for (int item : p)
        item_row.push_back(static_cast<int>(
            std::lower_bound(unique_items.begin(), unique_items.end(), item) - unique_items.begin()));
    const PackedSequences global{
        assemble_global_sequence(g_items, item_row, positions, graphs.positions, maxp), graphs.positions};
    h_g = target_attention_->forward(tape, global, h_t, opts.trace);
  }

  const Var scores =
      matmul_nt(matmul(fused, tape.param(*projection_)), slice_rows(items, 1, n_items_));
  return {scores, {h_t, fused, h_g}};
}

LossBundle MgcotModel::loss(Tape& tape, const ForwardResult& fwd, const std::vector<int>& labels,
                            std::uint64_t shuffle_seed) const {
  (void)tape;
  LossBundle out;
  out.beta = cfg_.effective_beta();
  out.tau = cfg_.tau;
  out.main = main_loss(fwd.scores, labels);
  if (fwd.views.global.valid() && fwd.views.fused.rows() >= 2) {
    out.contrastive = contrastive_loss(fwd.views.fused, fwd.views.global, cfg_.tau, shuffle_seed, &out.negatives);
    out.total = total_loss(out.main, out.contrastive, out.beta);
  } else {
    out.total = out.main;
  }
  return out;
}

Var main_loss(const Var& scores, const std::vector<int>& labels) {
  std::vector<int> cols(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > scores.cols()) throw DataError("main_loss: label outside [1, N]");
    cols[i] = labels[i] - 1;
  }
  return cross_entropy(scores, cols);
}

std::vector<int> derangement(int n, std::uint64_t seed) {
  if (n < 2) throw DataError("derangement: needs at least two elements");
  std::mt19937_64 rng(seed);
  const int offset = std::uniform_int_distribution<int>(1, n - 1)(rng);
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = (i + offset) % n;
  return p;
}

Var contrastive_loss(const Var& fused, const Var& global, double tau, std::uint64_t seed,
                     std::vector<int>* negatives_out) {
  if (fused.rows() != global.rows() || fused.cols() != global.cols())
    throw ShapeError("contrastive_loss: view shapes differ");
  if (fused.rows() < 2) throw DataError("contrastive_loss: batch of one has no negative");
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be > 0");
  std::vector<int> perm = derangement(static_cast<int>(fused.rows()), seed);
  if (negatives_out) *negatives_out = perm;
  const Var sim_p = scale(row_dot(fused, global), 1.0 / tau);
  const Var sim_n = scale(row_dot(fused, gather_rows(global, std::move(perm))), 1.0 / tau);
  return scale(add(mean(log_sigmoid(sim_p)), mean(log_sigmoid(scale(sim_n, -1.0)))), -1.0);
}

Var total_loss(const Var& main, const Var& contrastive, double beta) {
  if (beta < 0.0) throw ConfigError("total_loss: beta must be >= 0");
  return add(main, scale(contrastive, beta));
}

}  // namespace mgcot
