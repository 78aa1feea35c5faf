#include "gradcheck.hpp"

#include "oracles.hpp"

#include "mgcot/attention.hpp"
#include "mgcot/encoders.hpp"
#include "mgcot/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

namespace mgcot::testing {

double GradReport::worst() const {
  double w = 0.0;
  for (const auto& t : tensors) w = std::max(w, t.rel_error);
  return w;
}

std::string GradReport::worst_name() const {
  double w = -1.0;
  std::string name;
  for (const auto& t : tensors)
    if (t.rel_error > w) {
      w = t.rel_error;
      name = t.name;
    }
  return name;
}

std::size_t GradReport::checked() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.checked;
  return n;
}

std::size_t GradReport::skipped() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.skipped;
  return n;
}

bool GradReport::ok(double tol) const {
  return !tensors.empty() && worst() <= tol && skipped() * 5 <= checked() + skipped();
}

std::string GradReport::summary() const {
  return fmt::format("worst rel err {:.3e} ({}), {} coords checked, {} skipped", worst(), worst_name(),
                     checked(), skipped());
}

namespace {

struct Evaluation {
  double value = 0.0;
  long long support = 0;
};

class SupportScope {
 public:
  explicit SupportScope(std::atomic<long long>& c) { ad::set_support_counter(&c); }
  ~SupportScope() { ad::set_support_counter(nullptr); }
};

Evaluation evaluate(const ScalarFn& f, const std::vector<Matrix>& inputs) {
  std::atomic<long long> support{0};
  SupportScope scope(support);
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  const ad::Var out = f(tape, leaves);
  return {out.scalar(), support.load()};
}

TensorGradError compare(const std::string& name, Matrix& value, const Matrix& analytic, int frozen_row,
                        const std::function<Evaluation()>& eval, const Evaluation& base,
                        const GradCheckOptions& opts) {
  TensorGradError out;
  out.name = name;
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (Index r = 0; r < value.rows(); ++r) {
    if (r == frozen_row) continue;
    for (Index c = 0; c < value.cols(); ++c) {
      const double x = value(r, c);
      value(r, c) = x + opts.h;
      const Evaluation plus = eval();
      value(r, c) = x - opts.h;
      const Evaluation minus = eval();
      value(r, c) = x;
      if (plus.support != base.support || minus.support != base.support) {
        ++out.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * opts.h);
      const double a = analytic(r, c);
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
  }
  out.analytic_norm = std::sqrt(a2);
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), opts.norm_floor});
  out.rel_error = std::sqrt(diff2) / denom;
  return out;
}

}  // namespace

GradReport check_gradients(const ScalarFn& f, std::vector<Matrix> inputs,
                           const std::vector<std::string>& input_names, ParameterStore* params,
                           const GradCheckOptions& opts) {
  std::vector<Matrix> leaf_grads;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
    if (params) params->zero_grad();
    const ad::Var out = f(tape, leaves);
    tape.backward(out);
    for (const ad::Var& v : leaves)
      leaf_grads.push_back(v.has_grad() ? v.grad() : Matrix::Zero(v.rows(), v.cols()).eval());
  }
  const auto eval = [&] { return evaluate(f, inputs); };
  const Evaluation base = eval();

  GradReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string name = i < input_names.size() ? input_names[i] : fmt::format("input{}", i);
    report.tensors.push_back(compare(name, inputs[i], leaf_grads[i], -1, eval, base, opts));
  }
  if (params)
    for (std::size_t i = 0; i < params->size(); ++i) {
      Parameter& p = (*params)[i];
      const Matrix analytic = p.grad;
      report.tensors.push_back(compare(p.name, p.value, analytic, p.frozen_row, eval, base, opts));
    }
  return report;
}

namespace {

void init_store(ParameterStore& store, std::mt19937_64& rng, double scale) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    p.value = random_matrix(p.value.rows(), p.value.cols(), rng, scale);
  }
}

GradReport attention_case() {
  std::mt19937_64 rng(11);
  ParameterStore store;
  AttentionConfig cfg;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  cfg.layer_norm = true;
  MultiHeadSparseAttention mha(store, "mha", cfg);
  init_store(store, rng, 0.5);
  const ad::Offsets offsets{0, 2, 6, 9};
  const Matrix weights = random_matrix(9, 8, rng);
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
        const PackedSequences out = mha.forward(tape, {in[0], offsets}, false, nullptr);
        return ad::sum(ad::mul_const(out.rows, weights));
      },
      {random_matrix(9, 8, rng)}, {"input"}, &store);
}

GradReport target_attention_case() {
  std::mt19937_64 rng(12);
  ParameterStore store;
  TargetAttention ta(store, "ta", 6);
  init_store(store, rng, 0.5);
  const ad::Offsets offsets{0, 1, 4, 8};
  const Matrix weights = random_matrix(3, 6, rng);
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
        return ad::sum(ad::mul_const(ta.forward(tape, {in[0], offsets}, in[1]), weights));
      },
      {random_matrix(8, 6, rng), random_matrix(3, 6, rng)}, {"global", "target"}, &store);
}

GradReport neighbor_fusion_case() {
  std::mt19937_64 rng(13);
  ParameterStore store;
  NeighborFusion fusion(store, "fusion", 6);
  init_store(store, rng, 0.5);
  LocalSessionGraph graph;
  graph.neighbors = {{{1, 0.5}, {2, 0.25}}, {{0, 0.5}}, {{0, 0.25}, {3, 0.2}}, {}};
  const Matrix weights = random_matrix(4, 6, rng);
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
        return ad::sum(ad::mul_const(fusion.forward(tape, in[0], graph), weights));
      },
      {random_matrix(4, 6, rng)}, {"sessions"}, &store);
}

GradReport ggnn_case() {
  std::mt19937_64 rng(14);
  ParameterStore store;
  Ggnn ggnn(store, "ggnn", 4, 2);
  init_store(store, rng, 0.5);
  const CurrentSessionGraph graph = build_current_graph(std::vector<int>{1, 2, 3, 2, 4, 2});
  const Matrix weights = random_matrix(static_cast<Index>(graph.nodes.size()), 4, rng);
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
        return ad::sum(ad::mul_const(ggnn_encode(tape, ggnn, graph, in[0]), weights));
      },
      {random_matrix(5, 4, rng)}, {"item_embeddings"}, &store);
}

GradReport gcn_case() {
  std::mt19937_64 rng(15);
  ParameterStore store;
  Gcn gcn(store, "gcn", 4, false);
  init_store(store, rng, 0.5);
  ItemGraph co = random_cooccurrence_graph(6, 0.5, 4, rng);
  auto adj = std::make_shared<const SparseMatrix>(normalized_adjacency(reweight_shortest_path(co, 0)));
  const Matrix weights = random_matrix(7, 4, rng);
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
        return ad::sum(ad::mul_const(gcn_encode(tape, gcn, adj, in[0]), weights));
      },
      {random_matrix(7, 4, rng)}, {"item_embeddings"}, &store);
}

GradReport main_loss_case() {
  std::mt19937_64 rng(16);
  const std::vector<int> labels{3, 1, 7, 3};
  return check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& in) { return main_loss(in[0], labels); },
      {random_matrix(4, 7, rng, 2.0)}, {"scores"}, nullptr);
}

GradReport contrastive_case() {
  std::mt19937_64 rng(17);
  return check_gradients(
      [&](ad::Tape&, const std::vector<ad::Var>& in) { return contrastive_loss(in[0], in[1], 0.7, 99); },
      {random_matrix(4, 6, rng, 0.5), random_matrix(4, 6, rng, 0.5)}, {"fused", "global"}, nullptr);
}

GradReport tiny_model_case() {
  ModelConfig cfg;
  cfg.embedding_dim = 4;
  cfg.heads = 2;
  cfg.top_k = 2;
  cfg.beta = 5.0;
  cfg.max_position = 6;
  MgcotModel model(cfg, 12, 5);
  std::mt19937_64 rng(18);
  init_store(model.params(), rng, 0.5);
  model.params().get("item_embedding").value.row(0).setZero();
  const std::vector<Session> train{{"a", {1, 2, 3, 4}, 0, SplitTag::train},
                                   {"b", {2, 5, 6, 2, 7}, 1, SplitTag::train},
                                   {"c", {8, 9, 10, 11, 12, 1}, 2, SplitTag::train},
                                   {"d", {3, 4, 9, 5}, 3, SplitTag::train}};
  model.set_global_graph(reweight_shortest_path(build_global_cooccurrence(train, 12), 0));
  const std::vector<std::vector<int>> prefixes{{1, 2, 3}, {2, 5, 6, 2}, {3, 9, 5}};
  const std::vector<int> labels{4, 7, 12};
  return check_gradients(
      [&](ad::Tape& tape, const std::vector<ad::Var>&) {
        ForwardOptions opts;
        const ForwardResult fwd = model.forward(tape, prefixes, opts);
        return model.loss(tape, fwd, labels, 7).total;
      },
      {}, {}, &model.params());
}

}  // namespace

std::vector<GradCase> gradient_suite() {
  return {{"multi_head_sparse_attention", attention_case},
          {"target_attention", target_attention_case},
          {"neighbor_fusion", neighbor_fusion_case},
          {"ggnn_encode", ggnn_case},
          {"gcn_encode", gcn_case},
          {"main_loss", main_loss_case},
          {"contrastive_loss", contrastive_case},
          {"tiny_model", tiny_model_case}};
}

}  // namespace mgcot::testing
