#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace mgcot {

struct Interaction {
  std::string session_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  // Secondary ordering key within a session (e.g. Diginetica's timeframe).
  std::int64_t order = 0;
};

// Column layout of a delimited interaction log. Columns are 0-based.
struct ColumnSchema {
  char delimiter = ',';
  int session_col = 0;
  int item_col = 1;
  int time_col = 2;
  int order_col = -1;
  bool has_header = false;
};

struct LoadResult {
  std::vector<Interaction> interactions;
  std::size_t malformed = 0;
  std::size_t lines = 0;
  std::vector<std::string> warnings;
};

// Parses integers, or dates of the form YYYY-MM-DD[( |T)HH:MM:SS] as UTC epoch seconds.
std::optional<std::int64_t> parse_timestamp(const std::string& text);

// Throws IoError if the file cannot be read and SchemaError if more than 1%
// of data lines are malformed.
LoadResult load_interactions(const std::filesystem::path& path, const ColumnSchema& schema);

class Vocabulary {
 public:
  // Returns the dense index for raw id, assigning the next one if new.
  int add(const std::string& raw_id);
  std::optional<int> encode(const std::string& raw_id) const;
  const std::string& decode(int index) const;
  int item_count() const { return static_cast<int>(reverse_.size()) - 1; }

 private:
  std::unordered_map<std::string, int> forward_;
  std::vector<std::string> reverse_{std::string{}};  // slot 0 is padding
};

enum class SplitTag { train, test };

struct Session {
  std::string id;
  std::vector<int> items;  // dense indices in [1, N]
  std::int64_t time_key = 0;
  SplitTag split = SplitTag::train;
};

struct TrainingExample {
  std::vector<int> prefix;
  int label = 0;
};

struct CorpusStats {
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::size_t train_sessions = 0;
  std::size_t test_sessions = 0;
  int items = 0;
  double avg_length = 0.0;
};

struct Corpus {
  std::vector<Session> train_sessions;  // ordered by time key
  std::vector<Session> test_sessions;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> test;
  Vocabulary vocab;
  CorpusStats stats;
};

struct FilterConfig {
  std::size_t min_session_len = 2;
  std::size_t min_item_freq = 5;
};

struct Sessionized {
  std::vector<Session> sessions;  // ordered by time key, ties by first appearance
  Vocabulary vocab;
};

// Groups by session, orders events by (timestamp, order, file position), then
// removes rare items and short sessions until neither rule removes anything.
Sessionized sessionize_and_filter(const std::vector<Interaction>& interactions,
                                  const FilterConfig& config = {});

struct TestFraction {
  double fraction = 0.2;
};
struct TimeBoundary {
  std::int64_t boundary = 0;  // sessions with time key > boundary are test
};
using SplitSpec = std::variant<TestFraction, TimeBoundary>;

// Tags sessions, drops test items unseen in train, re-indexes the vocabulary
// over training items and augments both splits.
Corpus temporal_split(std::vector<Session> sessions, const Vocabulary& vocab, const SplitSpec& split);

// [v1..vL] -> ([v1..vk], v(k+1)) for k = 1..L-1.
std::vector<TrainingExample> augment(const std::vector<Session>& sessions);

struct SynthConfig {
  int n_items = 500;
  int n_sessions = 20000;
  // Mass of each item's preferred successor is c / (1 + c).
  double concentration = 4.0;
  int min_len = 2;
  int max_len = 10;
  int alternatives = 4;
  double test_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  Corpus corpus;
  // Generator transition rows over raw item numbers 0..n_items-1.
  std::vector<std::vector<std::pair<int, double>>> transitions;
  // Dense index of the generator's most likely successor of each dense item (0 if unseen).
  std::vector<int> argmax_successor;
  double top1_mass = 0.0;
};

SynthCorpus synth_generate(const SynthConfig& config);

struct Batch {
  std::vector<std::size_t> example_ids;
  // Row-major batch x max_len, right padded with 0.
  std::vector<int> padded;
  std::size_t max_len = 0;
  std::vector<int> lengths;
  std::vector<int> labels;

  std::size_t size() const { return lengths.size(); }
  std::vector<int> prefix(std::size_t row) const;
};

class BatchIterator {
 public:
  BatchIterator(const std::vector<TrainingExample>& examples, std::size_t batch_size,
                bool shuffle, std::uint64_t seed);

  std::size_t batch_count() const;
  // Example order for `epoch`; a seeded permutation when shuffling.
  std::vector<std::size_t> order(int epoch) const;
  std::vector<Batch> epoch(int epoch) const;
  Batch make_batch(const std::vector<std::size_t>& ids) const;

 private:
  const std::vector<TrainingExample>* examples_;
  std::size_t batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
};

// Derives an independent stream seed from a base seed and a tag tuple.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// Corpus directory: VERSION, vocab.txt, train.txt, test.txt,
// train_sessions.txt, test_sessions.txt, stats.txt.
inline constexpr int kCorpusFormatVersion = 1;
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);
std::string format_stats(const CorpusStats& stats, const std::string& name);

}  // namespace mgcot
