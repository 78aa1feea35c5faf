#include "mgcot/dataio.hpp"

#include "mgcot/errors.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

namespace mgcot {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (std::isspace(static_cast<unsigned char>(s[b])) || s[b] == '"')) ++b;
  while (e > b && (std::isspace(static_cast<unsigned char>(s[e - 1])) || s[e - 1] == '"')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const long long v = std::stoll(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  if (auto v = parse_int(s)) return *v >= 0 ? v : std::nullopt;
  // Fractional epoch seconds: keep the integer part.
  if (const auto dot = s.find('.'); dot != std::string::npos && dot > 0) {
    const std::string frac = s.substr(dot + 1);
    if (!frac.empty() && std::all_of(frac.begin(), frac.end(), ::isdigit)) {
      if (auto v = parse_int(s.substr(0, dot)); v && *v >= 0) return v;
    }
  }
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3) return std::nullopt;
  if (static_cast<std::size_t>(consumed) != s.size()) {
    if (std::sscanf(s.c_str() + consumed, "%c%2d:%2d:%2d", &sep, &hh, &mm, &ss) != 4 ||
        (sep != ' ' && sep != 'T'))
      return std::nullopt;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto secs = sys_days{ymd}.time_since_epoch();
  const std::int64_t epoch = duration_cast<seconds>(secs).count() + hh * 3600 + mm * 60 + ss;
  if (epoch < 0) return std::nullopt;
  return epoch;
}

LoadResult load_interactions(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read interaction file: " + path.string());
  LoadResult result;
  std::string line;
  bool header_pending = schema.has_header;
  const int needed = std::max({schema.session_col, schema.item_col, schema.time_col, schema.order_col});
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    ++result.lines;
    const auto cols = split_line(line, schema.delimiter);
    if (static_cast<int>(cols.size()) <= needed) {
      ++result.malformed;
      continue;
    }
    Interaction it;
    it.session_id = cols[static_cast<std::size_t>(schema.session_col)];
    it.item_id = cols[static_cast<std::size_t>(schema.item_col)];
    const auto ts = parse_timestamp(cols[static_cast<std::size_t>(schema.time_col)]);
    std::optional<std::int64_t> ord = std::int64_t{0};
    if (schema.order_col >= 0) ord = parse_int(cols[static_cast<std::size_t>(schema.order_col)]);
    if (it.session_id.empty() || it.item_id.empty() || !ts || !ord) {
      ++result.malformed;
      continue;
    }
    it.timestamp = *ts;
    it.order = *ord;
    result.interactions.push_back(std::move(it));
  }
  if (result.lines == 0) result.warnings.push_back("empty input: " + path.string());
  if (result.malformed > 0)
    result.warnings.push_back(fmt::format("{} malformed line(s) skipped", result.malformed));
  if (result.lines > 0 &&
      static_cast<double>(result.malformed) > 0.01 * static_cast<double>(result.lines))
    throw SchemaError(fmt::format("{} of {} lines do not match the declared schema",
                                  result.malformed, result.lines));
  return result;
}

int Vocabulary::add(const std::string& raw_id) {
  auto [it, inserted] = forward_.try_emplace(raw_id, static_cast<int>(reverse_.size()));
  if (inserted) reverse_.push_back(raw_id);
  return it->second;
}

std::optional<int> Vocabulary::encode(const std::string& raw_id) const {
  const auto it = forward_.find(raw_id);
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::decode(int index) const {
  if (index < 1 || index >= static_cast<int>(reverse_.size()))
    throw DataError("item index outside vocabulary: " + std::to_string(index));
  return reverse_[static_cast<std::size_t>(index)];
}

Sessionized sessionize_and_filter(const std::vector<Interaction>& interactions,
                                  const FilterConfig& config) {
  if (interactions.empty()) throw DataError("no interactions to sessionize");

  struct Raw {
    std::string id;
    std::vector<std::size_t> events;  // indices into interactions
    std::int64_t time_key = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, std::size_t> by_id;
  std::vector<Raw> raw;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    auto [it, inserted] = by_id.try_emplace(interactions[i].session_id, raw.size());
    if (inserted) raw.push_back(Raw{interactions[i].session_id, {}, 0, i});
    raw[it->second].events.push_back(i);
  }
  // Item sequences as interned raw ids.
  std::unordered_map<std::string, int> intern;
  std::vector<std::string> names;
  std::vector<std::vector<int>> seqs(raw.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    auto& ev = raw[s].events;
    std::stable_sort(ev.begin(), ev.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = interactions[a];
      const auto& y = interactions[b];
      if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
      return x.order < y.order;
    });
    raw[s].time_key = interactions[ev.back()].timestamp;
    for (std::size_t e : ev) {
      auto [it, inserted] = intern.try_emplace(interactions[e].item_id, static_cast<int>(names.size()));
      if (inserted) names.push_back(interactions[e].item_id);
      seqs[s].push_back(it->second);
    }
  }

  std::vector<char> alive(raw.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::size_t> freq(names.size(), 0);
    for (std::size_t s = 0; s < seqs.size(); ++s)
      if (alive[s])
        for (int v : seqs[s]) ++freq[static_cast<std::size_t>(v)];
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      if (!alive[s]) continue;
      auto& q = seqs[s];
      const auto before = q.size();
      std::erase_if(q, [&](int v) { return freq[static_cast<std::size_t>(v)] < config.min_item_freq; });
      if (q.size() != before) changed = true;
      if (q.size() < config.min_session_len) {
        alive[s] = 0;
        changed = true;
      }
    }
  }

  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < raw.size(); ++s)
    if (alive[s]) keep.push_back(s);
  if (keep.empty()) throw DataError("empty corpus: every session was filtered away");
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (raw[a].time_key != raw[b].time_key) return raw[a].time_key < raw[b].time_key;
    return raw[a].first_seen < raw[b].first_seen;
  });

  Sessionized out;
  for (std::size_t s : keep) {
    Session sess;
    sess.id = raw[s].id;
    sess.time_key = raw[s].time_key;
    for (int v : seqs[s]) sess.items.push_back(out.vocab.add(names[static_cast<std::size_t>(v)]));
    out.sessions.push_back(std::move(sess));
  }
  return out;
}

std::vector<TrainingExample> augment(const std::vector<Session>& sessions) {
  std::vector<TrainingExample> out;
  for (const auto& s : sessions) {
    for (std::size_t k = 1; k < s.items.size(); ++k) {
      TrainingExample ex;
      ex.prefix.assign(s.items.begin(), s.items.begin() + static_cast<std::ptrdiff_t>(k));
      ex.label = s.items[k];
      out.push_back(std::move(ex));
    }
  }
  return out;
}

Corpus temporal_split(std::vector<Session> sessions, const Vocabulary& vocab, const SplitSpec& split) {
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const Session& a, const Session& b) { return a.time_key < b.time_key; });
  const std::size_t m = sessions.size();
  std::size_t n_train = 0;
  if (const auto* f = std::get_if<TestFraction>(&split)) {
    if (!(f->fraction > 0.0 && f->fraction < 1.0)) throw ConfigError("test fraction must be in (0, 1)");
    const auto n_test = static_cast<std::size_t>(std::llround(f->fraction * static_cast<double>(m)));
    n_train = m - std::min(n_test, m);
  } else {
    const auto boundary = std::get<TimeBoundary>(split).boundary;
    while (n_train < m && sessions[n_train].time_key <= boundary) ++n_train;
  }
  if (n_train == 0 || n_train == m) throw DataError("split produced an empty train or test partition");

  Corpus corpus;
  std::vector<int> remap(static_cast<std::size_t>(vocab.item_count()) + 1, 0);
  for (std::size_t s = 0; s < n_train; ++s) {
    Session sess = std::move(sessions[s]);
    sess.split = SplitTag::train;
    for (int& v : sess.items) {
      int& r = remap[static_cast<std::size_t>(v)];
      if (r == 0) r = corpus.vocab.add(vocab.decode(v));
      v = r;
    }
    corpus.train_sessions.push_back(std::move(sess));
  }
  for (std::size_t s = n_train; s < m; ++s) {
    Session sess = std::move(sessions[s]);
    sess.split = SplitTag::test;
    std::vector<int> kept;
    for (int v : sess.items)
      if (int r = remap[static_cast<std::size_t>(v)]; r != 0) kept.push_back(r);
    if (kept.size() < 2) continue;
    sess.items = std::move(kept);
    corpus.test_sessions.push_back(std::move(sess));
  }
  if (corpus.test_sessions.empty()) throw DataError("test partition empty after cold-start removal");

  corpus.train = augment(corpus.train_sessions);
  corpus.test = augment(corpus.test_sessions);
  auto& st = corpus.stats;
  st.train_examples = corpus.train.size();
  st.test_examples = corpus.test.size();
  st.train_sessions = corpus.train_sessions.size();
  st.test_sessions = corpus.test_sessions.size();
  st.items = corpus.vocab.item_count();
  std::size_t total_len = 0;
  for (const auto& s : corpus.train_sessions) total_len += s.items.size();
  for (const auto& s : corpus.test_sessions) total_len += s.items.size();
  st.avg_length = static_cast<double>(total_len) /
                  static_cast<double>(st.train_sessions + st.test_sessions);
  return corpus;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

SynthCorpus synth_generate(const SynthConfig& cfg) {
  if (cfg.n_items < 10 || cfg.n_sessions < 100) throw ConfigError("synth: need n_items >= 10 and n_sessions >= 100");
  if (cfg.min_len < 2 || cfg.max_len < cfg.min_len) throw ConfigError("synth: invalid session length range");
  if (!(cfg.concentration > 0.0)) throw ConfigError("synth: concentration must be positive");
  if (cfg.alternatives < 0 || cfg.alternatives > cfg.n_items - 2) throw ConfigError("synth: invalid alternative count");

  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.n_items;
  const double top = std::isinf(cfg.concentration) ? 1.0 : cfg.concentration / (1.0 + cfg.concentration);

  SynthCorpus out;
  out.top1_mass = top;
  out.transitions.resize(static_cast<std::size_t>(n));
  std::vector<std::discrete_distribution<int>> rows;
  std::vector<std::vector<int>> targets(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::exponential_distribution<double> expo(1.0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> succ;
    while (static_cast<int>(succ.size()) < 1 + cfg.alternatives) {
      const int j = pick(rng);
      if (j != i && std::find(succ.begin(), succ.end(), j) == succ.end()) succ.push_back(j);
    }
    std::vector<double> w(succ.size(), 0.0);
    w[0] = top;
    double alt_total = 0.0;
    for (std::size_t a = 1; a < succ.size(); ++a) alt_total += (w[a] = expo(rng));
    for (std::size_t a = 1; a < succ.size(); ++a) w[a] = alt_total > 0 ? w[a] / alt_total * (1.0 - top) : 0.0;
    for (std::size_t a = 0; a < succ.size(); ++a) out.transitions[static_cast<std::size_t>(i)].emplace_back(succ[a], w[a]);
    rows.emplace_back(w.begin(), w.end());
    targets[static_cast<std::size_t>(i)] = std::move(succ);
  }
  // Skewed start distribution over a random item order.
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> start_w(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) start_w[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = 1.0 / std::pow(r + 1.0, 0.8);
  std::discrete_distribution<int> start(start_w.begin(), start_w.end());
  std::uniform_int_distribution<int> length(cfg.min_len, cfg.max_len);

  Vocabulary vocab;
  std::vector<Session> sessions;
  sessions.reserve(static_cast<std::size_t>(cfg.n_sessions));
  for (int s = 0; s < cfg.n_sessions; ++s) {
    Session sess;
    sess.id = "s" + std::to_string(s);
    sess.time_key = s;
    const int len = length(rng);
    int cur = start(rng);
    for (int t = 0; t < len; ++t) {
      sess.items.push_back(vocab.add("i" + std::to_string(cur)));
      cur = targets[static_cast<std::size_t>(cur)][static_cast<std::size_t>(rows[static_cast<std::size_t>(cur)](rng))];
    }
    sessions.push_back(std::move(sess));
  }
  out.corpus = temporal_split(std::move(sessions), vocab, TestFraction{cfg.test_fraction});

  const Vocabulary& dense = out.corpus.vocab;
  out.argmax_successor.assign(static_cast<std::size_t>(dense.item_count()) + 1, 0);
  for (int v = 1; v <= dense.item_count(); ++v) {
    const int raw = std::stoi(dense.decode(v).substr(1));
    const int succ = targets[static_cast<std::size_t>(raw)][0];
    out.argmax_successor[static_cast<std::size_t>(v)] = dense.encode("i" + std::to_string(succ)).value_or(0);
  }
  return out;
}

std::vector<int> Batch::prefix(std::size_t row) const {
  const auto* p = padded.data() + row * max_len;
  return std::vector<int>(p, p + lengths[row]);
}

BatchIterator::BatchIterator(const std::vector<TrainingExample>& examples, std::size_t batch_size,
                             bool shuffle, std::uint64_t seed)
    : examples_(&examples), batch_size_(batch_size), shuffle_(shuffle), seed_(seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (examples.empty()) throw DataError("no examples to batch");
}

std::size_t BatchIterator::batch_count() const {
  return (examples_->size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchIterator::order(int epoch) const {
  std::vector<std::size_t> ids(examples_->size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (shuffle_) {
    std::mt19937_64 rng(derive_seed(seed_, 0x5348u, static_cast<std::uint64_t>(epoch)));
    std::shuffle(ids.begin(), ids.end(), rng);
  }
  return ids;
}

Batch BatchIterator::make_batch(const std::vector<std::size_t>& ids) const {
  Batch b;
  b.example_ids = ids;
  for (std::size_t id : ids) b.max_len = std::max(b.max_len, (*examples_)[id].prefix.size());
  b.padded.assign(ids.size() * b.max_len, 0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto& ex = (*examples_)[ids[r]];
    std::copy(ex.prefix.begin(), ex.prefix.end(), b.padded.begin() + static_cast<std::ptrdiff_t>(r * b.max_len));
    b.lengths.push_back(static_cast<int>(ex.prefix.size()));
    b.labels.push_back(ex.label);
  }
  return b;
}

std::vector<Batch> BatchIterator::epoch(int epoch) const {
  const auto ids = order(epoch);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < ids.size(); start += batch_size_) {
    const std::size_t end = std::min(ids.size(), start + batch_size_);
    out.push_back(make_batch(std::vector<std::size_t>(ids.begin() + static_cast<std::ptrdiff_t>(start),
                                                      ids.begin() + static_cast<std::ptrdiff_t>(end))));
  }
  return out;
}

namespace {

void write_examples(const std::vector<TrainingExample>& ex, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : ex) {
    for (std::size_t i = 0; i < e.prefix.size(); ++i) out << (i ? " " : "") << e.prefix[i];
    out << '\t' << e.label << '\n';
  }
}

void write_sessions(const std::vector<Session>& ss, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : ss) {
    out << s.id << '\t' << s.time_key << '\t';
    for (std::size_t i = 0; i < s.items.size(); ++i) out << (i ? " " : "") << s.items[i];
    out << '\n';
  }
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  int v;
  while (in >> v) out.push_back(v);
  return out;
}

std::vector<TrainingExample> read_examples(const std::filesystem::path& path, int n_items) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<TrainingExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw SchemaError("bad example line in " + path.string());
    TrainingExample ex;
    ex.prefix = parse_ints(line.substr(0, tab));
    ex.label = std::stoi(line.substr(tab + 1));
    if (ex.prefix.empty() || ex.label < 1 || ex.label > n_items) throw SchemaError("invalid example in " + path.string());
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Session> read_sessions(const std::filesystem::path& path, SplitTag tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Session> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) throw SchemaError("bad session line in " + path.string());
    Session s;
    s.id = line.substr(0, t1);
    s.time_key = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    s.items = parse_ints(line.substr(t2 + 1));
    s.split = tag;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream v(dir / "VERSION");
    v << "mgcot-corpus " << kCorpusFormatVersion << '\n';
  }
  {
    std::ofstream v(dir / "vocab.txt");
    if (!v) throw IoError("cannot write vocabulary in " + dir.string());
    for (int i = 1; i <= corpus.vocab.item_count(); ++i) v << i << '\t' << corpus.vocab.decode(i) << '\n';
  }
  write_examples(corpus.train, dir / "train.txt");
  write_examples(corpus.test, dir / "test.txt");
  write_sessions(corpus.train_sessions, dir / "train_sessions.txt");
  write_sessions(corpus.test_sessions, dir / "test_sessions.txt");
  std::ofstream st(dir / "stats.txt");
  st << "train_examples: " << corpus.stats.train_examples << '\n'
     << "test_examples: " << corpus.stats.test_examples << '\n'
     << "train_sessions: " << corpus.stats.train_sessions << '\n'
     << "test_sessions: " << corpus.stats.test_sessions << '\n'
     << "items: " << corpus.stats.items << '\n'
     << "avg_length: " << fmt::format("{:.6f}", corpus.stats.avg_length) << '\n';
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream ver(dir / "VERSION");
  if (!ver) throw IoError("not a corpus directory: " + dir.string());
  std::string tag;
  int version = 0;
  ver >> tag >> version;
  if (tag != "mgcot-corpus" || version != kCorpusFormatVersion)
    throw SchemaError("unsupported corpus version in " + dir.string());

  Corpus c;
  std::ifstream voc(dir / "vocab.txt");
  if (!voc) throw IoError("missing vocab.txt in " + dir.string());
  std::string line;
  while (std::getline(voc, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw SchemaError("bad vocabulary line");
    const int idx = std::stoi(line.substr(0, tab));
    if (c.vocab.add(line.substr(tab + 1)) != idx) throw SchemaError("vocabulary indices not contiguous");
  }
  const int n = c.vocab.item_count();
  c.train = read_examples(dir / "train.txt", n);
  c.test = read_examples(dir / "test.txt", n);
  c.train_sessions = read_sessions(dir / "train_sessions.txt", SplitTag::train);
  c.test_sessions = read_sessions(dir / "test_sessions.txt", SplitTag::test);
  auto& st = c.stats;
  st.train_examples = c.train.size();
  st.test_examples = c.test.size();
  st.train_sessions = c.train_sessions.size();
  st.test_sessions = c.test_sessions.size();
  st.items = n;
  std::size_t total = 0;
  for (const auto& s : c.train_sessions) total += s.items.size();
  for (const auto& s : c.test_sessions) total += s.items.size();
  st.avg_length = static_cast<double>(total) / static_cast<double>(std::max<std::size_t>(1, st.train_sessions + st.test_sessions));
  return c;
}

std::string format_stats(const CorpusStats& s, const std::string& name) {
  std::string out = fmt::format("{:<14}{:>12}{:>12}{:>10}{:>10}\n", "Dataset", "Train", "Test", "Items", "Avg.Len.");
  out += fmt::format("{:<14}{:>12}{:>12}{:>10}{:>10.2f}\n", name, s.train_examples, s.test_examples, s.items, s.avg_length);
  return out;
}

}  // namespace mgcot
