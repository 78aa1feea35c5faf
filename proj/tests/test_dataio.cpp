#include "doctest.h"

#include "mgcot/dataio.hpp"
#include "mgcot/errors.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

using namespace mgcot;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("mgcot_" + name);
  std::ofstream(p) << text;
  return p;
}

Interaction ev(const std::string& s, const std::string& i, std::int64_t t) { return {s, i, t, 0}; }

}  // namespace

TEST_CASE("load_interactions parses, counts malformed lines and rejects bad files") {
  const auto three = write_temp("three.csv", "s1,i1,1\ns1,i2,2\ns2,i3,3\n");
  const LoadResult r = load_interactions(three, {});
  CHECK(r.interactions.size() == 3);
  std::set<std::string> ids;
  for (const auto& it : r.interactions) ids.insert(it.session_id);
  CHECK(ids.size() == 2);
  CHECK(r.interactions[1].item_id == "i2");

  const auto empty = write_temp("empty.csv", "");
  const LoadResult e = load_interactions(empty, {});
  CHECK(e.interactions.empty());
  CHECK_FALSE(e.warnings.empty());

  std::string text;
  for (int i = 0; i < 1000; ++i) text += i == 500 ? "garbage line\n" : "s" + std::to_string(i / 4) + ",x,5\n";
  const LoadResult m = load_interactions(write_temp("thousand.csv", text), {});
  CHECK(m.interactions.size() == 999);
  CHECK(m.malformed == 1);

  std::string bad;
  for (int i = 0; i < 100; ++i) bad += i % 10 == 0 ? "oops\n" : "s,x,1\n";
  CHECK_THROWS_AS(load_interactions(write_temp("bad.csv", bad), {}), SchemaError);
  CHECK_THROWS_AS(load_interactions(fs::temp_directory_path() / "mgcot_missing_file.csv", {}), IoError);

  CHECK(parse_timestamp("2016-01-02").value() == 1451692800);
  CHECK(parse_timestamp("1970-01-01 00:01:00").value() == 60);
  CHECK_FALSE(parse_timestamp("yesterday").has_value());
}

TEST_CASE("sessionize drops singleton sessions and rare items") {
  const std::vector<Interaction> in{ev("1", "a", 1), ev("1", "b", 2), ev("2", "a", 3), ev("3", "b", 4), ev("3", "c", 5)};
  const Sessionized s = sessionize_and_filter(in, {2, 1});
  REQUIRE(s.sessions.size() == 2);
  CHECK(s.vocab.decode(s.sessions[0].items[0]) == "a");
  CHECK(s.sessions[1].items.size() == 2);

  std::vector<Interaction> freq;
  for (int i = 0; i < 10; ++i) {
    freq.push_back(ev(std::to_string(i), "common", i));
    freq.push_back(ev(std::to_string(i), i < 4 ? "rare" : "other", i));
  }
  const Sessionized f = sessionize_and_filter(freq, {2, 5});
  CHECK_FALSE(f.vocab.encode("rare").has_value());
  CHECK(f.sessions.size() == 6);
  CHECK_THROWS_AS(sessionize_and_filter({ev("1", "a", 1)}, {2, 1}), DataError);
}

TEST_CASE("sessionize orders events by time and reaches a joint fixed point") {
  const Sessionized o = sessionize_and_filter({ev("1", "b", 5), ev("1", "a", 1), ev("1", "c", 5)}, {2, 1});
  REQUIRE(o.sessions[0].items.size() == 3);
  CHECK(o.vocab.decode(o.sessions[0].items[0]) == "a");
  CHECK(o.vocab.decode(o.sessions[0].items[1]) == "b");

  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> item(0, 40), len(1, 6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Interaction> in;
    for (int s = 0; s < 150; ++s) {
      const int n = len(rng);
      for (int t = 0; t < n; ++t) in.push_back(ev(std::to_string(s), std::to_string(item(rng) * item(rng) / 40), s));
    }
    const Sessionized out = sessionize_and_filter(in, {2, 5});
    std::map<int, int> counts;
    for (const auto& s : out.sessions) {
      REQUIRE(s.items.size() >= 2);
      for (int v : s.items) ++counts[v];
    }
    for (const auto& [v, c] : counts) REQUIRE(c >= 5);
  }
}

TEST_CASE("temporal split partitions by time and removes cold-start items") {
  Vocabulary vocab;
  std::vector<Session> sessions;
  for (int i = 0; i < 10; ++i) {
    Session s;
    s.id = std::to_string(i);
    s.time_key = 100 - i;  // reverse file order
    s.items = {vocab.add("a"), vocab.add("b")};
    sessions.push_back(s);
  }
  sessions[0].items.push_back(vocab.add("cold"));  // time 100: test
  sessions[1].items = {vocab.add("a"), vocab.add("cold")};  // time 99: test, drops below 2
  const Corpus c = temporal_split(sessions, vocab, TimeBoundary{98});
  CHECK(c.train_sessions.size() == 8);
  CHECK(c.test_sessions.size() == 1);
  CHECK(c.test_sessions[0].items.size() == 2);
  CHECK_FALSE(c.vocab.encode("cold").has_value());
  for (std::size_t i = 1; i < c.train_sessions.size(); ++i)
    CHECK(c.train_sessions[i - 1].time_key <= c.train_sessions[i].time_key);
  CHECK_THROWS_AS(temporal_split(sessions, vocab, TimeBoundary{1000}), DataError);
}

TEST_CASE("augment emits every prefix") {
  const auto two = augment({{"x", {1, 2}, 0, SplitTag::train}});
  REQUIRE(two.size() == 1);
  CHECK(two[0].prefix == std::vector<int>{1});
  CHECK(two[0].label == 2);
  const auto three = augment({{"x", {1, 2, 3}, 0, SplitTag::train}});
  REQUIRE(three.size() == 2);
  CHECK(three[1].prefix == std::vector<int>{1, 2});
  CHECK(three[1].label == 3);

  const std::vector<Session> corpus{{"a", {1, 2}, 0, SplitTag::train},
                                    {"b", {1, 2, 3}, 0, SplitTag::train},
                                    {"c", {4, 3, 2, 1}, 0, SplitTag::train}};
  const auto ex = augment(corpus);
  CHECK(ex.size() == 6);
  std::size_t i = 0;
  for (const auto& s : corpus)
    for (std::size_t k = 1; k < s.items.size(); ++k, ++i) {
      CHECK(ex[i].prefix == std::vector<int>(s.items.begin(), s.items.begin() + static_cast<long>(k)));
      CHECK(ex[i].label == s.items[k]);
    }
}

TEST_CASE("batches are padded, sized and seeded") {
  std::vector<TrainingExample> ex;
  for (int i = 0; i < 1030; ++i) ex.push_back({std::vector<int>(1 + i % 7, 1 + i % 5), 1});
  BatchIterator it(ex, 512, true, 9);
  const auto batches = it.epoch(0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 512);
  CHECK(batches[1].size() == 512);
  CHECK(batches[2].size() == 6);
  for (const Batch& b : batches)
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto& src = ex[b.example_ids[r]];
      CHECK(b.prefix(r) == src.prefix);
      for (std::size_t c = src.prefix.size(); c < b.max_len; ++c) CHECK(b.padded[r * b.max_len + c] == 0);
    }
  CHECK(it.order(0) == BatchIterator(ex, 512, true, 9).order(0));
  CHECK(it.order(0) != it.order(1));
  auto sorted = it.order(0);
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  CHECK(BatchIterator(ex, 512, false, 9).order(3)[5] == 5);
}

TEST_CASE("synthetic generator is deterministic and its argmax oracle is calibrated") {
  SynthConfig cfg;
  cfg.n_sessions = 2000;
  cfg.n_items = 100;
  const SynthCorpus a = synth_generate(cfg), b = synth_generate(cfg);
  const auto dir_a = fs::temp_directory_path() / "mgcot_synth_a", dir_b = fs::temp_directory_path() / "mgcot_synth_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  save_corpus(a.corpus, dir_a);
  save_corpus(b.corpus, dir_b);
  for (const char* f : {"train.txt", "test.txt", "vocab.txt"}) {
    std::ifstream fa(dir_a / f), fb(dir_b / f);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(sa == sb);
  }
  const Corpus back = load_corpus(dir_a);
  CHECK(back.train.size() == a.corpus.train.size());
  CHECK(back.test.size() == a.corpus.test.size());
  CHECK(back.vocab.item_count() == a.corpus.vocab.item_count());
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  SynthConfig chain = cfg;
  chain.concentration = std::numeric_limits<double>::infinity();
  const SynthCorpus c = synth_generate(chain);
  for (const auto& e : c.corpus.test) CHECK(c.argmax_successor[e.prefix.back()] == e.label);

  SynthConfig full;
  full.concentration = 4.0;
  const SynthCorpus s = synth_generate(full);
  CHECK(s.top1_mass == doctest::Approx(0.8));
  std::size_t hits = 0;
  for (const auto& e : s.corpus.test) hits += s.argmax_successor[e.prefix.back()] == e.label ? 1 : 0;
  const double p1 = static_cast<double>(hits) / static_cast<double>(s.corpus.test.size());
  CHECK(std::abs(p1 - 0.8) < 0.03);

  SynthConfig bad;
  bad.n_items = 5;
  CHECK_THROWS_AS(synth_generate(bad), ConfigError);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 0) != derive_seed(2, 2, 0));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
}
