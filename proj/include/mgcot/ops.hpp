#pragma once

// Differentiable operations on tape variables. Shapes are checked and
// violations throw ShapeError.

#include "mgcot/entmax.hpp"
#include "mgcot/tensor.hpp"

#include <atomic>
#include <memory>
#include <random>
#include <vector>

namespace mgcot::ad {

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
// a W + b
Var linear(const Var& a, const Var& w, const Var& b);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var log_sigmoid(const Var& a);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
Var slice_cols(const Var& a, Index begin, Index count);
Var slice_rows(const Var& a, Index begin, Index count);
// out.row(i) = a.row(idx[i]); idx[i] < 0 yields a zero row.
Var gather_rows(const Var& a, std::vector<int> idx);
// Constant sparse matrix times a variable.
Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& a);
// Row-wise inner products, Rx1.
Var row_dot(const Var& a, const Var& b);
Var sum(const Var& a);
Var mean(const Var& a);
// Elementwise product with a constant mask (dropout masks, log-prior offsets use add).
Var mul_const(const Var& a, const Matrix& m);
Var add_const(const Var& a, const Matrix& m);
// Inverted dropout; identity when rate == 0.
Var dropout(const Var& a, double rate, std::mt19937_64& rng);
Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

// Segments are contiguous row ranges [offsets[s], offsets[s+1]) of a column
// vector (or of a row block for segment_weighted_sum).
using Offsets = std::vector<int>;

// alpha_from_logit applied elementwise.
Var alpha_from_logits(const Var& logits);
// Per-segment alpha-entmax of a Rx1 score column; alpha is Sx1. Segments
// must be non-empty.
Var entmax_segments(const Var& scores, const Var& alpha, const Offsets& offsets,
                    const EntmaxOptions& opts = {});
// Per-segment softmax of a Rx1 column. Empty segments are allowed.
Var softmax_segments(const Var& scores, const Offsets& offsets);
// out.row(s) = sum_{r in segment s} w(r) * rows.row(r); empty segment -> zero row.
Var segment_weighted_sum(const Var& weights, const Var& rows, const Offsets& offsets);

// Mean softmax cross-entropy of logits (BxN) against column labels.
Var cross_entropy(const Var& logits, const std::vector<int>& label_cols);

// Per-sequence multi-head alpha-entmax self-attention over packed rows.
// Sequence b occupies rows [offsets[b], offsets[b+1]); head h uses columns
// [h*dk, (h+1)*dk). alpha is B x heads. Returns the concatenated head
// outputs. If `weights_out` is non-null it receives, per (b, h), the n x n
// attention matrix in row-major order.
Var sparse_self_attention(const Var& q, const Var& k, const Var& v, const Var& alpha,
                          const Offsets& offsets, int heads,
                          std::vector<std::vector<double>>* weights_out = nullptr,
                          const EntmaxOptions& opts = {});

// Forward-only serial reference of sparse_self_attention on plain matrices.
Matrix sparse_self_attention_serial(const Matrix& q, const Matrix& k, const Matrix& v, const Matrix& alpha,
                                    const Offsets& offsets, int heads, const EntmaxOptions& opts = {});

// Test hook: while set, every entmax op adds its number of nonzero outputs
// to *counter, so callers can detect support changes between evaluations.
void set_support_counter(std::atomic<long long>* counter);

}  // namespace mgcot::ad
