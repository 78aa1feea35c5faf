#pragma once

// Sparse attention blocks: multi-head alpha-entmax self-attention over the
// current view, target attention over the global view, and gated fusion of
// neighbour sessions.

#include "mgcot/graphs.hpp"
#include "mgcot/ops.hpp"
#include "mgcot/tensor.hpp"

#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace mgcot {

struct AttentionConfig {
  int width = 200;  // 2d
  int heads = 1;
  double dropout = 0.2;
  bool layer_norm = true;
  EntmaxOptions entmax;

  int head_dim() const { return width / heads; }
  void validate() const;
};

// Packed sequences: sequence b owns rows [offsets[b], offsets[b+1]) of `rows`.
struct PackedSequences {
  ad::Var rows;
  ad::Offsets offsets;

  int batch() const { return static_cast<int>(offsets.size()) - 1; }
  // Last row of each sequence.
  std::vector<int> last_rows() const;
};

// Per-session attention diagnostics.
struct AttentionTrace {
  std::vector<std::vector<double>> self_weights;  // per (b, h): n x n row-major
  Matrix head_alpha;                              // B x heads
  std::vector<double> target_weights;             // packed, global-view rows
  std::vector<double> target_alpha;               // per session
};

// Q = ReLU(H W_q + b_q), K = H W_k + b_k, V = H W_v + b_v; per head
// alpha-entmax(Q K^T / sqrt(dk)) V with a head-specific alpha learned from
// the last row of each sequence; then A + Dropout(FFN(A)) over the head
// outputs A, followed by optional LayerNorm.
class MultiHeadSparseAttention {
 public:
  MultiHeadSparseAttention(ParameterStore& store, const std::string& prefix, AttentionConfig cfg);

  const AttentionConfig& config() const { return cfg_; }

  // rng may be null when dropout is inactive.
  PackedSequences forward(ad::Tape& tape, const PackedSequences& input, bool training,
                          std::mt19937_64* rng, AttentionTrace* trace = nullptr) const;

  // B x heads alphas for the given input (diagnostics and tests).
  ad::Var head_alphas(ad::Tape& tape, const PackedSequences& input) const;

 private:
  AttentionConfig cfg_;
  Parameter *wq_, *bq_, *wk_, *bk_, *wv_, *bv_;
  Parameter *w_alpha_, *b_alpha_;  // head_dim x heads, 1 x heads
  Parameter *w1_, *b1_, *w2_, *b2_;
  Parameter *ln_gamma_, *ln_beta_;
};

// u_i = ReLU(H_g,i W_1 + h_t' W_2 + b_0); e_i = u_i W_0;
// w = alpha-entmax(e) per session with alpha learned from h_t';
// output sum_i w_i H_g,i.
class TargetAttention {
 public:
  TargetAttention(ParameterStore& store, const std::string& prefix, int width, EntmaxOptions entmax = {});

  // global: packed global-view rows; target: B x width.
  ad::Var forward(ad::Tape& tape, const PackedSequences& global, const ad::Var& target,
                  AttentionTrace* trace = nullptr) const;

 private:
  int width_;
  EntmaxOptions entmax_;
  Parameter *w1_, *w2_, *b0_, *w0_, *w_alpha_, *b_alpha_;
};

// For session i with neighbours N(i):
//   a_ij = softmax_j( s_i . s_j / sqrt(width) + log J_ij )
//   n_i  = sum_j a_ij s_j
//   g_i  = sigmoid([s_i, n_i] W_g + b_g)
//   out  = s_i + g_i * n_i
// Sessions without neighbours pass through unchanged.
class NeighborFusion {
 public:
  NeighborFusion(ParameterStore& store, const std::string& prefix, int width);

  ad::Var forward(ad::Tape& tape, const ad::Var& sessions, const LocalSessionGraph& graph) const;

 private:
  int width_;
  Parameter *w_gate_, *b_gate_;
};

// One JSON object per line with the session's items, per-head self
// attention rows of the target position, the head alphas, and global-view
// target attention weights when present.
void write_attention_jsonl(std::ostream& out, const std::vector<std::vector<int>>& prefixes,
                           const std::vector<int>& labels, const AttentionTrace& trace, int heads);

}  // namespace mgcot
