#include "mgcot/evaluation.hpp"

#include "mgcot/errors.hpp"
#include "mgcot/model.hpp"

#include "json.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <numeric>

namespace mgcot {

std::vector<int> rank_items(std::span<const double> scores, int top_k) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  const auto before = [&](int a, int b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  const std::size_t k = top_k <= 0 ? order.size() : std::min<std::size_t>(order.size(), top_k);
  if (k < order.size()) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
    order.resize(k);
  } else {
    std::sort(order.begin(), order.end(), before);
  }
  for (int& i : order) ++i;
  return order;
}

int label_rank(std::span<const double> scores, int label) {
  if (label < 1 || label > static_cast<int>(scores.size())) throw DataError("label_rank: label out of range");
  const int y = label - 1;
  const double s = scores[y];
  int rank = 1;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j)
    if (scores[j] > s || (scores[j] == s && j < y)) ++rank;
  return rank;
}

std::vector<int> label_ranks(const Matrix& scores, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != scores.rows()) throw ShapeError("label_ranks: one label per row");
  std::vector<int> out(labels.size());
  const int rows = static_cast<int>(scores.rows());
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    out[r] = label_rank(std::span<const double>(scores.row(r).data(), scores.cols()), labels[r]);
  return out;
}

std::vector<int> label_ranks_serial(const Matrix& scores, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != scores.rows()) throw ShapeError("label_ranks: one label per row");
  std::vector<int> out(labels.size());
  for (Index r = 0; r < scores.rows(); ++r) {
    const std::vector<int> ranking = rank_items(std::span<const double>(scores.row(r).data(), scores.cols()));
    const auto it = std::find(ranking.begin(), ranking.end(), labels[r]);
    if (it == ranking.end()) throw DataError("label_ranks: label out of range");
    out[r] = static_cast<int>(it - ranking.begin()) + 1;
  }
  return out;
}

double precision_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) return 0.0;
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_at_k(std::span<const int> ranks, int k) {
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (int r : ranks)
    if (r <= k) total += 1.0 / r;
  return 100.0 * total / static_cast<double>(ranks.size());
}

namespace {

SliceMetrics slice(std::span<const int> ranks, const std::vector<int>& ks) {
  SliceMetrics s;
  s.count = ranks.size();
  for (int k : ks) {
    s.precision.push_back(precision_at_k(ranks, k));
    s.mrr.push_back(mrr_at_k(ranks, k));
  }
  return s;
}

nlohmann::json slice_json(const SliceMetrics& s, const std::vector<int>& ks) {
  nlohmann::json j;
  j["count"] = s.count;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    j[fmt::format("P@{}", ks[i])] = s.precision[i];
    j[fmt::format("M@{}", ks[i])] = s.mrr[i];
  }
  return j;
}

SliceMetrics slice_from_json(const nlohmann::json& j, const std::vector<int>& ks) {
  SliceMetrics s;
  s.count = j.at("count").get<std::size_t>();
  for (int k : ks) {
    s.precision.push_back(j.at(fmt::format("P@{}", k)).get<double>());
    s.mrr.push_back(j.at(fmt::format("M@{}", k)).get<double>());
  }
  return s;
}

}  // namespace

double MetricsReport::p(int k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw ConfigError(fmt::format("report has no P@{}", k));
  return overall.precision[static_cast<std::size_t>(it - ks.begin())];
}

double MetricsReport::m(int k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  if (it == ks.end()) throw ConfigError(fmt::format("report has no M@{}", k));
  return overall.mrr[static_cast<std::size_t>(it - ks.begin())];
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  j["ablation"] = ablation;
  j["ks"] = ks;
  j["slice_threshold"] = slice_threshold;
  j["protocol"] = protocol;
  j["overall"] = slice_json(overall, ks);
  j["short"] = slice_json(short_slice, ks);
  j["long"] = slice_json(long_slice, ks);
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.model = j.at("model").get<std::string>();
    r.ablation = j.at("ablation").get<std::string>();
    r.ks = j.at("ks").get<std::vector<int>>();
    r.slice_threshold = j.at("slice_threshold").get<int>();
    r.protocol = j.value("protocol", r.protocol);
    r.overall = slice_from_json(j.at("overall"), r.ks);
    r.short_slice = slice_from_json(j.at("short"), r.ks);
    r.long_slice = slice_from_json(j.at("long"), r.ks);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("metrics report: ") + e.what());
  }
}

MetricsReport build_report(std::span<const int> ranks, std::span<const int> prefix_lengths,
                           const std::string& model, const std::string& ablation, std::vector<int> ks,
                           int slice_threshold) {
  if (ranks.size() != prefix_lengths.size()) throw ShapeError("build_report: one length per rank");
  MetricsReport r;
  r.model = model;
  r.ablation = ablation;
  r.ks = std::move(ks);
  r.slice_threshold = slice_threshold;
  std::vector<int> short_ranks, long_ranks;
  for (std::size_t i = 0; i < ranks.size(); ++i)
    (prefix_lengths[i] <= slice_threshold ? short_ranks : long_ranks).push_back(ranks[i]);
  r.overall = slice(ranks, r.ks);
  r.short_slice = slice(short_ranks, r.ks);
  r.long_slice = slice(long_ranks, r.ks);
  return r;
}

std::string format_reports(const std::vector<MetricsReport>& reports) {
  std::string out = fmt::format("{:<12} {:<40} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}\n", "Model",
                                "Variant", "P@10", "P@20", "M@10", "M@20", "short P20", "short M20",
                                "long P20", "long M20");
  for (const auto& r : reports) {
    const auto at = [&](const SliceMetrics& s, bool precision) {
      const auto it = std::find(r.ks.begin(), r.ks.end(), 20);
      if (it == r.ks.end() || s.count == 0) return std::string("-");
      const std::size_t i = static_cast<std::size_t>(it - r.ks.begin());
      return fmt::format("{:.2f}", precision ? s.precision[i] : s.mrr[i]);
    };
    const auto overall = [&](int k, bool precision) {
      const auto it = std::find(r.ks.begin(), r.ks.end(), k);
      if (it == r.ks.end()) return std::string("-");
      const std::size_t i = static_cast<std::size_t>(it - r.ks.begin());
      return fmt::format("{:.2f}", precision ? r.overall.precision[i] : r.overall.mrr[i]);
    };
    out += fmt::format("{:<12} {:<40} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9}\n", r.model, r.ablation,
                       overall(10, true), overall(20, true), overall(10, false), overall(20, false),
                       at(r.short_slice, true), at(r.short_slice, false), at(r.long_slice, true),
                       at(r.long_slice, false));
  }
  return out;
}

PopularityBaseline::PopularityBaseline(const std::vector<Session>& train, int n_items)
    : n_items_(n_items), counts_(static_cast<std::size_t>(n_items), 0.0) {
  for (const auto& s : train)
    for (int item : s.items) {
      if (item < 1 || item > n_items) throw DataError("popularity: item index out of range");
      counts_[static_cast<std::size_t>(item - 1)] += 1.0;
    }
}

void PopularityBaseline::score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const {
  const Eigen::Map<const Eigen::RowVectorXd> row(counts_.data(), n_items_);
  scores.resize(static_cast<Index>(prefixes.size()), n_items_);
  for (Index r = 0; r < scores.rows(); ++r) scores.row(r) = row;
}

MarkovBaseline::MarkovBaseline(const std::vector<Session>& train, int n_items)
    : n_items_(n_items), pop_(train, n_items), bigrams_(static_cast<std::size_t>(n_items) + 1) {
  pop_total_ = std::accumulate(pop_.counts().begin(), pop_.counts().end(), 0.0);
  std::vector<std::vector<int>> next(static_cast<std::size_t>(n_items) + 1);
  for (const auto& s : train)
    for (std::size_t t = 0; t + 1 < s.items.size(); ++t) next[s.items[t]].push_back(s.items[t + 1]);
  for (std::size_t prev = 0; prev < next.size(); ++prev) {
    auto& v = next[prev];
    std::sort(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j] == v[i]) ++j;
      bigrams_[prev].emplace_back(v[i], static_cast<double>(j - i));
      i = j;
    }
  }
}

void MarkovBaseline::score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const {
  pop_.score(prefixes, scores);
  // Popularity share < 1 so any observed bigram outranks every unseen one.
  scores /= pop_total_ + 1.0;
  for (std::size_t r = 0; r < prefixes.size(); ++r) {
    if (prefixes[r].empty()) continue;
    const int last = prefixes[r].back();
    if (last < 1 || last > n_items_) continue;
    for (const auto& [item, count] : bigrams_[static_cast<std::size_t>(last)])
      scores(static_cast<Index>(r), item - 1) += count;
  }
}

ModelRanker::ModelRanker(const MgcotModel& model, std::string name) : model_(&model), name_(std::move(name)) {}

int ModelRanker::n_items() const { return model_->n_items(); }

void ModelRanker::score(const std::vector<std::vector<int>>& prefixes, Matrix& scores) const {
  ad::Tape tape;
  ForwardOptions opts;
  opts.training = false;
  opts.compute_global = false;
  scores = model_->forward(tape, prefixes, opts).scores.value();
}

std::vector<int> rank_examples(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                               std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("rank_examples: batch_size must be >= 1");
  std::vector<int> ranks;
  ranks.reserve(examples.size());
  Matrix scores;
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(examples.size(), begin + batch_size);
    std::vector<std::vector<int>> prefixes;
    std::vector<int> labels;
    for (std::size_t i = begin; i < end; ++i) {
      prefixes.push_back(examples[i].prefix);
      labels.push_back(examples[i].label);
    }
    ranker.score(prefixes, scores);
    const std::vector<int> r = label_ranks(scores, labels);
    ranks.insert(ranks.end(), r.begin(), r.end());
  }
  return ranks;
}

MetricsReport evaluate_ranker(const Ranker& ranker, const std::vector<TrainingExample>& examples,
                              const std::string& ablation, std::size_t batch_size, int slice_threshold) {
  if (examples.empty()) throw DataError("evaluate: empty test set");
  const std::vector<int> ranks = rank_examples(ranker, examples, batch_size);
  std::vector<int> lengths;
  lengths.reserve(examples.size());
  for (const auto& e : examples) lengths.push_back(static_cast<int>(e.prefix.size()));
  return build_report(ranks, lengths, ranker.name(), ablation, {10, 20}, slice_threshold);
}

}  // namespace mgcot
