#pragma once

// Item-level encoders: a gated graph network over per-session graphs and a
// single-layer GCN over the global item graph.

#include "mgcot/graphs.hpp"
#include "mgcot/ops.hpp"
#include "mgcot/tensor.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mgcot {

// Uniform(-1/sqrt(dim), 1/sqrt(dim)) for every entry.
void init_uniform(Parameter& p, int dim, std::mt19937_64& rng);

// The per-session graphs of a batch stacked block-diagonally.
struct SessionGraphBatch {
  std::vector<int> node_items;              // item index per node, all sessions
  std::shared_ptr<const SparseMatrix> a_in;  // nodes x nodes
  std::shared_ptr<const SparseMatrix> a_out;
  std::vector<int> position_node;           // packed position -> node row
  ad::Offsets positions;                    // session b: positions [positions[b], positions[b+1])
};

SessionGraphBatch build_session_graph_batch(const std::vector<std::vector<int>>& sessions);

// Gated graph update:
//   a  = [A_in (H W_in + b_in), A_out (H W_out + b_out)]
//   r  = sigma(a W_ir + H W_hr + b_r),  z = sigma(a W_iz + H W_hz + b_z)
//   n  = tanh(a W_in' + b_in' + r * (H W_hn + b_hn))
//   H' = (1 - z) n + z H
// applied `steps` times with shared weights; zero steps is the identity.
class Ggnn {
 public:
  Ggnn(ParameterStore& store, const std::string& prefix, int dim, int steps);

  int dim() const { return dim_; }
  int steps() const { return steps_; }

  ad::Var forward(ad::Tape& tape, const ad::Var& nodes, std::shared_ptr<const SparseMatrix> a_in,
                  std::shared_ptr<const SparseMatrix> a_out) const;

  std::vector<Parameter*> parameters() const;

 private:
  int dim_;
  int steps_;
  Parameter* w_in_;
  Parameter* b_in_;
  Parameter* w_out_;
  Parameter* b_out_;
  Parameter* w_ih_;  // 2d x 3d, gate order r, z, n
  Parameter* b_ih_;
  Parameter* w_hh_;  // d x 3d
  Parameter* b_hh_;
};

// Node states for one session graph: rows follow graph.nodes.
ad::Var ggnn_encode(ad::Tape& tape, const Ggnn& ggnn, const CurrentSessionGraph& graph,
                    const ad::Var& item_embeddings);

// D^{-1/2} (S + I) D^{-1/2} over items 0..n_items with S = max(A, A^T) of
// the reweighted global graph, so the operator is symmetric even for a
// directed graph. Row 0 has only its self loop.
SparseMatrix normalized_adjacency(const GlobalItemGraph& graph);

// Rows `rows` of m, in the given order.
SparseMatrix select_rows(const SparseMatrix& m, std::span<const int> rows);

// Inverted dropout on the stored entries.
SparseMatrix dropout_entries(const SparseMatrix& m, double rate, std::mt19937_64& rng);

// G = Â E W_g, optionally followed by ReLU.
class Gcn {
 public:
  Gcn(ParameterStore& store, const std::string& prefix, int dim, bool relu);

  // adj has one row per output and (n_items + 1) columns.
  ad::Var forward(ad::Tape& tape, std::shared_ptr<const SparseMatrix> adj,
                  const ad::Var& item_embeddings) const;

  Parameter& weight() const { return *w_; }

 private:
  bool relu_;
  Parameter* w_;
};

// Full-table propagation, (n_items + 1) x d.
ad::Var gcn_encode(ad::Tape& tape, const Gcn& gcn, std::shared_ptr<const SparseMatrix> adj,
                   const ad::Var& item_embeddings);

// Reverse position of step t in a length-L sequence is L - t (1-based
// steps), so the last item gets 1; clamped to max_position.
int reverse_position(int length, int t, int max_position);

// Packed global-view sequence: row r = [G(item_row[r]), P(reverse position)].
// `item_row` maps each packed position to a row of `item_states`.
ad::Var assemble_global_sequence(const ad::Var& item_states, const std::vector<int>& item_row,
                                 const ad::Var& positions, const ad::Offsets& offsets,
                                 int max_position);

}  // namespace mgcot
