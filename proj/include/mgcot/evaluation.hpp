#pragma once

// Ranking metrics, baselines and report formatting. Scores are laid out
// with column j holding item j + 1; the padding index never appears.

#include "mgcot/dataio.hpp"
#include "mgcot/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mgcot {

class MgcotModel;

// Items (1-based) by score descending, ties by ascending index. top_k <= 0
// returns the full ranking.
std::vector<int> rank_items(std::span<const double> scores, int top_k = 0);

// 1-based rank of `label` under the same ordering, without sorting.
int label_rank(std::span<const double> scores, int label);

// Per-row label ranks; OpenMP over rows. label_ranks_serial full-sorts
// every row and is the reference.
std::vector<int> label_ranks(const Matrix& scores, const std::vector<int>& labels);
std::vector<int> label_ranks_serial(const Matrix& scores, const std::vector<int>& labels);

// Percentages over one rank per example.
double precision_at_k(std::span<const int> ranks, int k);
double mrr_at_k(std::span<const int> ranks, int k);

struct SliceMetrics {
  std::size_t count = 0;
  std::vector<double> precision;  // aligned with MetricsReport::ks
  std::vector<double> mrr;
};

struct MetricsReport {
  std::string model = "MGCOT";
  std::string ablation = "full";
  std::vector<int> ks{10, 20};
  int slice_threshold = 5;  // short: prefix length <= threshold
  SliceMetrics overall;
  SliceMetrics short_slice;
  SliceMetrics long_slice;
  std::string protocol = "all augmented test prefixes";

  double p(int k) const;
  double m(int k) const;
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

MetricsReport build_report(std::span<const int> ranks, std::span<const int> prefix_lengths,
                           const std::string& model, const std::string& ablation,
                           std::vector<int> ks = {10, 20}, int slice_threshold = 5);

// One row per report: overall metrics, then short and long P@20/M@20.
std::string format_reports(const std::vector<MetricsReport>& reports);

// Scores batches of prefixes.
class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual std::string name() const = 0;
  virtual int n_items() const = 0;
  // scores is resized to prefixes.size() x n_items.
  virtual void score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const = 0;
};

// Train-frequency ranking, ties by index.
class PopularityBaseline : public Ranker {
 public:
  PopularityBaseline(const std::vector<Session>& train, int n_items);
  std::string name() const override { return "POP"; }
  int n_items() const override { return n_items_; }
  void score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const override;
  const std::vector<double>& counts() const { return counts_; }

 private:
  int n_items_;
  std::vector<double> counts_;  // index j -> item j + 1
};

// Bigram counts from the last prefix item, backing off to popularity.
class MarkovBaseline : public Ranker {
 public:
  MarkovBaseline(const std::vector<Session>& train, int n_items);
  std::string name() const override { return "Markov"; }
  int n_items() const override { return n_items_; }
  void score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const override;

 private:
  int n_items_;
  PopularityBaseline pop_;
  double pop_total_ = 0.0;
  std::vector<std::vector<std::pair<int, double>>> bigrams_;  // by previous item
};

class ModelRanker : public Ranker {
 public:
  explicit ModelRanker(const MgcotModel& model, std::string name = "MGCOT");
  std::string name() const override { return name_; }
  int n_items() const override;
  void score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const override;

 private:
  const MgcotModel* model_;
  std::string name_;
};

// Label ranks for every example, scored in batches.
std::vector<int> rank_examples(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                               std::size_t batch_size = 512);

MetricsReport evaluate_ranker(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                              const std::string& ablation = "full", std::size_t batch_size = 512,
                              int slice_threshold = 5);

}  // namespace mgcot
