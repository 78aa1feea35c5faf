#include "mgcot/attention.hpp"

#include "mgcot/errors.hpp"

#include "json.hpp"

#include <cmath>

namespace mgcot {

using namespace ad;

void AttentionConfig::validate() const {
  if (width < 1) throw ConfigError("attention: width must be >= 1");
  if (heads < 1 || width % heads != 0) throw ConfigError("attention: width must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("attention: dropout must be in [0, 1)");
}

std::vector<int> PackedSequences::last_rows() const {
  std::vector<int> out;
  out.reserve(offsets.size());
  for (std::size_t b = 0; b + 1 < offsets.size(); ++b) {
    if (offsets[b + 1] == offsets[b]) throw DataError("packed sequence: empty sequence");
    out.push_back(offsets[b + 1] - 1);
  }
  return out;
}

MultiHeadSparseAttention::MultiHeadSparseAttention(ParameterStore& store, const std::string& prefix,
                                                   AttentionConfig cfg)
    : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.width, dk = cfg_.head_dim(), h = cfg_.heads;
  wq_ = &store.add(prefix + ".wq", w, w);
  bq_ = &store.add(prefix + ".bq", 1, w);
  wk_ = &store.add(prefix + ".wk", w, w);
  bk_ = &store.add(prefix + ".bk", 1, w);
  wv_ = &store.add(prefix + ".wv", w, w);
  bv_ = &store.add(prefix + ".bv", 1, w);
  w_alpha_ = &store.add(prefix + ".w_alpha", dk, h);
  b_alpha_ = &store.add(prefix + ".b_alpha", 1, h);
  w1_ = &store.add(prefix + ".ffn_w1", w, w);
  b1_ = &store.add(prefix + ".ffn_b1", 1, w);
  w2_ = &store.add(prefix + ".ffn_w2", w, w);
  b2_ = &store.add(prefix + ".ffn_b2", 1, w);
  ln_gamma_ = &store.add(prefix + ".ln_gamma", 1, w);
  ln_beta_ = &store.add(prefix + ".ln_beta", 1, w);
  for (Parameter* p : {bq_, bk_, bv_, b_alpha_, b1_, b2_, ln_gamma_, ln_beta_}) p->decay = false;
}

Var MultiHeadSparseAttention::head_alphas(Tape& tape, const PackedSequences& input) const {
  const int dk = cfg_.head_dim();
  const Var target = gather_rows(input.rows, input.last_rows());
  const Var w = tape.param(*w_alpha_);
  Var logits;
  for (int h = 0; h < cfg_.heads; ++h) {
    const Var col = matmul(slice_cols(target, h * dk, dk), slice_cols(w, h, 1));
    logits = h == 0 ? col : concat_cols(logits, col);
  }
  return alpha_from_logits(add_row(logits, tape.param(*b_alpha_)));
}

PackedSequences MultiHeadSparseAttention::forward(Tape& tape, const PackedSequences& input, bool training,
                                                  std::mt19937_64* rng, AttentionTrace* trace) const {
  if (input.rows.cols() != cfg_.width) throw ShapeError("multi-head attention: input width differs from config");
  const bool drop = training && cfg_.dropout > 0.0;
  if (drop && rng == nullptr) throw ConfigError("multi-head attention: dropout needs an rng");
  const Var& x = input.rows;
  const Var q = relu(linear(x, tape.param(*wq_), tape.param(*bq_)));
  const Var k = linear(x, tape.param(*wk_), tape.param(*bk_));
  const Var v = linear(x, tape.param(*wv_), tape.param(*bv_));
  const Var alpha = head_alphas(tape, input);
  const Var attn = sparse_self_attention(q, k, v, alpha, input.offsets, cfg_.heads,
                                         trace ? &trace->self_weights : nullptr, cfg_.entmax);
  if (trace) trace->head_alpha = alpha.value();
  Var ffn = linear(relu(linear(attn, tape.param(*w1_), tape.param(*b1_))), tape.param(*w2_), tape.param(*b2_));
  if (drop) ffn = dropout(ffn, cfg_.dropout, *rng);
  Var out = add(ffn, attn);
  if (cfg_.layer_norm) out = layer_norm(out, tape.param(*ln_gamma_), tape.param(*ln_beta_));
  return {out, input.offsets};
}

TargetAttention::TargetAttention(ParameterStore& store, const std::string& prefix, int width,
                                 EntmaxOptions entmax)
    : width_(width), entmax_(entmax) {
  if (width < 1) throw ConfigError("target attention: width must be >= 1");
  w1_ = &store.add(prefix + ".w1", width, width);
  w2_ = &store.add(prefix + ".w2", width, width);
  b0_ = &store.add(prefix + ".b0", 1, width);
  w0_ = &store.add(prefix + ".w0", width, 1);
  w_alpha_ = &store.add(prefix + ".w_alpha", width, 1);
  b_alpha_ = &store.add(prefix + ".b_alpha", 1, 1);
  b0_->decay = false;
  b_alpha_->decay = false;
}

Var TargetAttention::forward(Tape& tape, const PackedSequences& global, const Var& target,
                             AttentionTrace* trace) const {
  const int batch = global.batch();
  if (global.rows.cols() != width_ || target.cols() != width_)
    throw ShapeError("target attention: width differs from config");
  if (target.rows() != batch) throw ShapeError("target attention: one target row per session required");
  std::vector<int> owner(static_cast<std::size_t>(global.rows.rows()));
  for (int b = 0; b < batch; ++b)
    for (int r = global.offsets[b]; r < global.offsets[b + 1]; ++r) owner[r] = b;
  const Var projected = gather_rows(matmul(target, tape.param(*w2_)), std::move(owner));
  const Var u = relu(add_row(add(matmul(global.rows, tape.param(*w1_)), projected), tape.param(*b0_)));
  const Var e = matmul(u, tape.param(*w0_));
  const Var alpha = alpha_from_logits(add_row(matmul(target, tape.param(*w_alpha_)), tape.param(*b_alpha_)));
  const Var w = entmax_segments(e, alpha, global.offsets, entmax_);
  if (trace) {
    trace->target_weights.assign(w.value().data(), w.value().data() + w.value().size());
    trace->target_alpha.assign(alpha.value().data(), alpha.value().data() + alpha.value().size());
  }
  return segment_weighted_sum(w, global.rows, global.offsets);
}

NeighborFusion::NeighborFusion(ParameterStore& store, const std::string& prefix, int width) : width_(width) {
  if (width < 1) throw ConfigError("neighbor fusion: width must be >= 1");
  w_gate_ = &store.add(prefix + ".w_gate", 2 * width, width);
  b_gate_ = &store.add(prefix + ".b_gate", 1, width);
  b_gate_->decay = false;
}

Var NeighborFusion::forward(Tape& tape, const Var& sessions, const LocalSessionGraph& graph) const {
  const Index batch = sessions.rows();
  if (sessions.cols() != width_) throw ShapeError("neighbor fusion: width differs from config");
  if (static_cast<Index>(graph.neighbors.size()) != batch)
    throw ShapeError("neighbor fusion: graph size differs from batch");
  std::vector<int> self_idx, nbr_idx;
  std::vector<double> log_j;
  Offsets offsets{0};
  for (Index i = 0; i < batch; ++i) {
    for (const Neighbor& n : graph.neighbors[static_cast<std::size_t>(i)]) {
      if (n.index < 0 || n.index >= batch) throw ShapeError("neighbor fusion: neighbour index out of range");
      if (!(n.weight > 0.0)) throw DataError("neighbor fusion: non-positive Jaccard weight");
      self_idx.push_back(static_cast<int>(i));
      nbr_idx.push_back(n.index);
      log_j.push_back(std::log(n.weight));
    }
    offsets.push_back(static_cast<int>(self_idx.size()));
  }
  if (self_idx.empty()) return sessions;
  const Var s_self = gather_rows(sessions, std::move(self_idx));
  const Var s_nbr = gather_rows(sessions, std::move(nbr_idx));
  const Matrix prior = Eigen::Map<const Matrix>(log_j.data(), static_cast<Index>(log_j.size()), 1);
  const Var logits = add_const(scale(row_dot(s_self, s_nbr), 1.0 / std::sqrt(static_cast<double>(width_))), prior);
  const Var a = softmax_segments(logits, offsets);
  const Var n = segment_weighted_sum(a, s_nbr, offsets);
  const Var g = sigmoid(linear(concat_cols(sessions, n), tape.param(*w_gate_), tape.param(*b_gate_)));
  return add(sessions, mul(g, n));
}

void write_attention_jsonl(std::ostream& out, const std::vector<std::vector<int>>& prefixes,
                           const std::vector<int>& labels, const AttentionTrace& trace, int heads) {
  std::size_t global_off = 0;
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const std::size_t len = prefixes[b].size();
    nlohmann::json j;
    j["items"] = prefixes[b];
    if (b < labels.size()) j["label"] = labels[b];
    if (!trace.self_weights.empty()) {
      nlohmann::json per_head = nlohmann::json::array();
      for (int h = 0; h < heads; ++h) {
        const auto& w = trace.self_weights[b * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        const std::size_t n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(w.size()))));
        // Row of the target position (last row).
        per_head.push_back(std::vector<double>(w.end() - static_cast<std::ptrdiff_t>(n), w.end()));
      }
      j["self_attention"] = per_head;
      std::vector<double> alphas;
      for (int h = 0; h < heads; ++h) alphas.push_back(trace.head_alpha(static_cast<Index>(b), h));
      j["head_alpha"] = alphas;
    }
    if (!trace.target_weights.empty()) {
      j["target_attention"] = std::vector<double>(trace.target_weights.begin() + static_cast<std::ptrdiff_t>(global_off),
                                                  trace.target_weights.begin() + static_cast<std::ptrdiff_t>(global_off + len));
      j["target_alpha"] = trace.target_alpha[b];
      global_off += len;
    }
    out << j.dump() << '\n';
  }
}

}  // namespace mgcot
