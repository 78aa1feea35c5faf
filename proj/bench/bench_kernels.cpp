// Parallel kernels against their serial references.

#include "mgcot/evaluation.hpp"
#include "mgcot/graphs.hpp"
#include "mgcot/ops.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace mgcot;

namespace {

ItemGraph random_graph(int n, int sessions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> item(1, n), len(2, 8);
  std::vector<Session> train(static_cast<std::size_t>(sessions));
  for (auto& s : train) {
    s.items.resize(static_cast<std::size_t>(len(rng)));
    for (int& x : s.items) x = item(rng);
  }
  return build_global_cooccurrence(train, n);
}

std::vector<std::vector<int>> random_sets(int sessions, int items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> item(1, items), len(1, 12);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(sessions));
  for (auto& s : out) {
    s.resize(static_cast<std::size_t>(len(rng)));
    for (int& x : s) x = item(rng);
    s = item_set(s);
  }
  return out;
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

const ItemGraph& bench_graph() {
  static const ItemGraph g = random_graph(5000, 8000, 1);
  return g;
}

void BM_ReweightParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reweight_shortest_path(bench_graph(), 50));
}
void BM_ReweightSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(reweight_shortest_path_serial(bench_graph(), 50));
}

void BM_LocalGraphParallel(benchmark::State& state) {
  const auto sets = random_sets(static_cast<int>(state.range(0)), 2000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_local_session_graph(sets, 3));
}
void BM_LocalGraphSerial(benchmark::State& state) {
  const auto sets = random_sets(static_cast<int>(state.range(0)), 2000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_local_session_graph_serial(sets, 3));
}

struct RankInput {
  Matrix scores = random_matrix(512, 20000, 3);
  std::vector<int> labels;
  RankInput() {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 512; ++i) labels.push_back(1 + static_cast<int>(rng() % 20000));
  }
};

const RankInput& rank_input() {
  static const RankInput r;
  return r;
}

void BM_LabelRanksParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(label_ranks(rank_input().scores, rank_input().labels));
}
void BM_LabelRanksSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(label_ranks_serial(rank_input().scores, rank_input().labels));
}

struct AttentionInput {
  ad::Offsets offsets{0};
  Matrix q, k, v, alpha;
  AttentionInput() {
    std::mt19937_64 rng(5);
    for (int b = 0; b < 512; ++b) offsets.push_back(offsets.back() + 2 + static_cast<int>(rng() % 15));
    q = random_matrix(offsets.back(), 100, 6);
    k = random_matrix(offsets.back(), 100, 7);
    v = random_matrix(offsets.back(), 100, 8);
    alpha = Matrix::Constant(512, 2, 1.5);
  }
};

const AttentionInput& attention_input() {
  static const AttentionInput a;
  return a;
}

void BM_AttentionParallel(benchmark::State& state) {
  const AttentionInput& a = attention_input();
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(ad::sparse_self_attention(tape.constant(a.q), tape.constant(a.k), tape.constant(a.v),
                                                       tape.constant(a.alpha), a.offsets, 2)
                                 .value());
  }
}
void BM_AttentionSerial(benchmark::State& state) {
  const AttentionInput& a = attention_input();
  for (auto _ : state)
    benchmark::DoNotOptimize(ad::sparse_self_attention_serial(a.q, a.k, a.v, a.alpha, a.offsets, 2));
}

}  // namespace

BENCHMARK(BM_ReweightParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReweightSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalGraphParallel)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalGraphSerial)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelRanksParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelRanksSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
