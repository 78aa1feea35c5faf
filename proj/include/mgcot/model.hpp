#pragma once

// Three-view session model: current session graph, in-batch neighbour
// sessions, and the global item graph, tied by a contrastive objective.

#include "mgcot/attention.hpp"
#include "mgcot/config.hpp"
#include "mgcot/dataio.hpp"
#include "mgcot/encoders.hpp"
#include "mgcot/graphs.hpp"
#include "mgcot/ops.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

namespace mgcot {

struct ViewRepresentations {
  ad::Var current;  // B x 2d, h_t'
  ad::Var fused;    // B x 2d, current + local
  ad::Var global;   // B x 2d; invalid when the global view was skipped
};

struct ForwardOptions {
  bool training = false;
  // Dropout stream; required when training with dropout.
  std::mt19937_64* rng = nullptr;
  bool compute_global = true;
  AttentionTrace* trace = nullptr;
};

struct ForwardResult {
  ad::Var scores;  // B x N; column j is item j + 1
  ViewRepresentations views;
};

struct LossBundle {
  ad::Var main;
  ad::Var contrastive;  // invalid when the term was not computed
  ad::Var total;
  double beta = 0.0;
  double tau = 1.0;
  std::vector<int> negatives;  // derangement used for Sim_n
};

class MgcotModel {
 public:
  MgcotModel(const ModelConfig& cfg, int n_items, std::uint64_t init_seed);
  MgcotModel(const MgcotModel&) = delete;
  MgcotModel& operator=(const MgcotModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int n_items() const { return n_items_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Normalized global adjacency, (n_items + 1) square.
  void set_global_graph(const GlobalItemGraph& graph);
  void set_global_adjacency(std::shared_ptr<const SparseMatrix> adj);
  bool has_global_graph() const { return adj_ != nullptr; }

  ForwardResult forward(ad::Tape& tape, const std::vector<std::vector<int>>& prefixes,
                        const ForwardOptions& opts) const;

  // Loss over a batch; `shuffle_seed` drives the derangement. The
  // contrastive term is skipped for batches of one session or when the
  // global view is absent and beta == 0.
  LossBundle loss(ad::Tape& tape, const ForwardResult& fwd, const std::vector<int>& labels,
                  std::uint64_t shuffle_seed) const;

  // Names of parameters that only the global view uses.
  std::vector<std::string> global_only_parameters() const;

 private:
  ModelConfig cfg_;
  int n_items_;
  ParameterStore store_;
  Parameter* items_;
  Parameter* global_items_ = nullptr;
  Parameter* positions_;
  Parameter* target_token_;
  Parameter* projection_;
  std::unique_ptr<Ggnn> ggnn_;
  std::unique_ptr<MultiHeadSparseAttention> mha_;
  std::unique_ptr<NeighborFusion> fusion_;
  std::unique_ptr<Gcn> gcn_;
  std::unique_ptr<TargetAttention> target_attention_;
  std::shared_ptr<const SparseMatrix> adj_;
};

// Mean softmax cross-entropy; labels are item indices in [1, N].
ad::Var main_loss(const ad::Var& scores, const std::vector<int>& labels);

// Rotation by a nonzero offset drawn from `seed`; no fixed points. n >= 2.
std::vector<int> derangement(int n, std::uint64_t seed);

// mean_i [-log sigma(r_i . g_i / tau) - log sigma(-r_i . g_{p(i)} / tau)].
// Throws DataError for a batch of one.
ad::Var contrastive_loss(const ad::Var& fused, const ad::Var& global, double tau,
                         std::uint64_t seed, std::vector<int>* negatives_out = nullptr);

ad::Var total_loss(const ad::Var& main, const ad::Var& contrastive, double beta);

}  // namespace mgcot
