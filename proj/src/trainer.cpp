#include "mgcot/trainer.hpp"

#include "mgcot/errors.hpp"
#include "mgcot/evaluation.hpp"

#include "json.hpp"

#include <fmt/core.h>
#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#ifndef MGCOT_GIT_REV
#define MGCOT_GIT_REV "unknown"
#endif

namespace mgcot {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 0x494e4954;
constexpr std::uint64_t kShuffleStream = 0x53484646;
constexpr std::uint64_t kDropoutStream = 0x44524f50;
constexpr std::uint64_t kNegativeStream = 0x4e454741;

constexpr char kMagic[8] = {'M', 'G', 'C', 'O', 'T', 'C', 'K', 'P'};

}  // namespace

std::string version_string() { return fmt::format("mgcot 0.1.0 ({})", MGCOT_GIT_REV); }

std::string RunLog::to_jsonl(bool include_wall_clock) const {
  std::string out;
  nlohmann::json header;
  header["type"] = "header";
  header["version"] = version;
  header["ablation"] = ablation;
  header["config"] = config_text;
  header["notes"] = notes;
  out += header.dump() + "\n";
  for (const auto& e : epochs) {
    nlohmann::json j;
    j["type"] = "epoch";
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["loss_main"] = e.loss_main;
    j["loss_contrastive"] = e.loss_contrastive;
    j["loss_total"] = e.loss_total;
    j["examples"] = e.examples;
    j["batches"] = e.batches;
    j["has_validation"] = e.has_validation;
    j["val_p10"] = e.val_p10;
    j["val_p20"] = e.val_p20;
    j["val_m10"] = e.val_m10;
    j["val_m20"] = e.val_m20;
    j["improved"] = e.improved;
    if (include_wall_clock) j["seconds"] = e.seconds;
    out += j.dump() + "\n";
  }
  return out;
}

RunLog RunLog::from_jsonl(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.at("type") == "header") {
        log.version = j.at("version").get<std::string>();
        log.ablation = j.value("ablation", std::string("full"));
        log.config_text = j.at("config").get<std::string>();
        log.notes = j.value("notes", std::vector<std::string>{});
      } else {
        EpochRecord e;
        e.epoch = j.at("epoch").get<int>();
        e.lr = j.at("lr").get<double>();
        e.loss_main = j.at("loss_main").get<double>();
        e.loss_contrastive = j.at("loss_contrastive").get<double>();
        e.loss_total = j.at("loss_total").get<double>();
        e.examples = j.at("examples").get<std::size_t>();
        e.batches = j.at("batches").get<std::size_t>();
        e.has_validation = j.at("has_validation").get<bool>();
        e.val_p10 = j.at("val_p10").get<double>();
        e.val_p20 = j.at("val_p20").get<double>();
        e.val_m10 = j.at("val_m10").get<double>();
        e.val_m20 = j.at("val_m20").get<double>();
        e.improved = j.at("improved").get<bool>();
        e.seconds = j.value("seconds", 0.0);
        log.epochs.push_back(e);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("run log: ") + e.what());
  }
  return log;
}

std::vector<double> RunLog::total_losses() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.loss_total);
  return out;
}

TrainData prepare_training_data(const Corpus& corpus, const TrainConfig& cfg) {
  TrainData data;
  data.n_items = corpus.vocab.item_count();
  const std::size_t m = corpus.train_sessions.size();
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(m)));
  if (cfg.validation_fraction > 0.0 && m >= 2) n_val = std::clamp<std::size_t>(n_val, 1, m - 1);
  if (n_val >= m) n_val = 0;
  data.fit_sessions.assign(corpus.train_sessions.begin(), corpus.train_sessions.end() - static_cast<std::ptrdiff_t>(n_val));
  data.validation_sessions.assign(corpus.train_sessions.end() - static_cast<std::ptrdiff_t>(n_val), corpus.train_sessions.end());
  if (data.fit_sessions.empty()) throw DataError("training: no sessions left after the validation split");
  data.train = augment(data.fit_sessions);
  data.validation = augment(data.validation_sessions);
  const ItemGraph cooc = build_global_cooccurrence(data.fit_sessions, data.n_items, cfg.graph.directed_global);
  data.graph = reweight_shortest_path(cooc, cfg.graph.sp_cap);
  return data;
}

double clip_grad_norm(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += params[i].grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= s;
  }
  return norm;
}

AdamW::AdamW(const ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    state_.m.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    state_.v.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void AdamW::step(ParameterStore& params, double lr, double weight_decay) {
  if (params.size() != state_.m.size()) throw ShapeError("adamw: parameter count changed");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.frozen_row >= 0) p.grad.row(p.frozen_row).setZero();
    Matrix& m = state_.m[i];
    Matrix& v = state_.v[i];
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseAbs2();
    if (p.decay && weight_decay > 0.0) p.value *= 1.0 - lr * weight_decay;
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    if (p.frozen_row >= 0) p.value.row(p.frozen_row).setZero();
  }
}

namespace {

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const auto* b = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), b, b + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void mat(const Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    const auto* b = reinterpret_cast<const char*>(m.data());
    buf_.insert(buf_.end(), b, b + sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& buf) : buf_(buf) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Matrix mat() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0) throw IntegrityError("checkpoint: negative matrix shape");
    const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    need(bytes);
    Matrix m(r, c);
    std::memcpy(m.data(), buf_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IntegrityError("checkpoint: truncated payload");
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::vector<char>& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  if (c.params.size() != c.names.size() || c.adam.m.size() != c.params.size() || c.adam.v.size() != c.params.size())
    throw ShapeError("checkpoint: inconsistent parameter lists");
  Writer w;
  w.str(config_to_text(c.config));
  w.pod<std::int32_t>(c.n_items);
  w.pod<std::int32_t>(c.next_epoch);
  w.pod<std::int32_t>(c.best_epoch);
  w.pod<double>(c.best_metric);
  w.pod<std::int32_t>(c.bad_epochs);
  w.pod<std::uint8_t>(c.finished ? 1 : 0);
  w.pod<std::uint64_t>(c.adam.step);
  w.pod<std::uint64_t>(c.names.size());
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    w.str(c.names[i]);
    w.mat(c.params[i]);
    w.mat(c.adam.m[i]);
    w.mat(c.adam.v[i]);
  }
  w.pod<std::uint64_t>(c.best_params.size());
  for (const Matrix& m : c.best_params) w.mat(m);
  w.str(c.log.to_jsonl(true));

  const auto& payload = w.bytes();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t size = payload.size();
    const std::uint32_t crc = crc_of(payload);
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IntegrityError("checkpoint: bad magic");
  if (version != kCheckpointVersion)
    throw IntegrityError(fmt::format("checkpoint: version {} not supported (expected {})", version, kCheckpointVersion));
  const auto file_size = std::filesystem::file_size(path);
  const std::uint64_t header = sizeof(kMagic) + sizeof(version) + sizeof(size);
  if (size + header + sizeof(std::uint32_t) != file_size) throw IntegrityError("checkpoint: size mismatch");
  std::vector<char> payload(size);
  std::uint32_t crc = 0;
  in.read(payload.data(), static_cast<std::streamsize>(size));
  in.read(reinterpret_cast<char*>(&crc), sizeof(crc));
  if (!in) throw IntegrityError("checkpoint: truncated file");
  if (crc != crc_of(payload)) throw IntegrityError("checkpoint: checksum mismatch");

  Reader r(payload);
  Checkpoint c;
  c.config = config_from_text(r.str());
  c.n_items = r.pod<std::int32_t>();
  c.next_epoch = r.pod<std::int32_t>();
  c.best_epoch = r.pod<std::int32_t>();
  c.best_metric = r.pod<double>();
  c.bad_epochs = r.pod<std::int32_t>();
  c.finished = r.pod<std::uint8_t>() != 0;
  c.adam.step = r.pod<std::uint64_t>();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    c.names.push_back(r.str());
    c.params.push_back(r.mat());
    c.adam.m.push_back(r.mat());
    c.adam.v.push_back(r.mat());
  }
  const auto nb = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nb; ++i) c.best_params.push_back(r.mat());
  c.log = RunLog::from_jsonl(r.str());
  if (!r.done()) throw IntegrityError("checkpoint: trailing bytes");
  return c;
}

namespace {

void load_parameters(ParameterStore& store, const std::vector<std::string>& names, const std::vector<Matrix>& values) {
  if (names.size() != store.size() || values.size() != store.size())
    throw IntegrityError("checkpoint: parameter count differs from model");
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    if (p.name != names[i]) throw IntegrityError("checkpoint: parameter order differs at " + p.name);
    if (p.value.rows() != values[i].rows() || p.value.cols() != values[i].cols())
      throw IntegrityError("checkpoint: shape differs for " + p.name);
    p.value = values[i];
  }
}

std::vector<Matrix> snapshot(const ParameterStore& store) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store[i].value);
  return out;
}

}  // namespace

std::unique_ptr<MgcotModel> model_from_checkpoint(const Checkpoint& ckpt, bool best) {
  auto model = std::make_unique<MgcotModel>(ckpt.config.model, ckpt.n_items, derive_seed(ckpt.config.seed, kInitStream));
  const bool use_best = best && !ckpt.best_params.empty();
  load_parameters(model->params(), ckpt.names, use_best ? ckpt.best_params : ckpt.params);
  return model;
}

Trainer::Trainer(TrainConfig cfg, TrainData data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      model_(std::make_unique<MgcotModel>(cfg_.model, data_.n_items, derive_seed(cfg_.seed, kInitStream))),
      optimizer_(model_->params()) {
  cfg_.validate();
  if (data_.train.empty()) throw DataError("training: no training examples");
  model_->set_global_graph(data_.graph);
  log_.config_text = config_to_text(cfg_);
  log_.version = version_string();
  log_.ablation = cfg_.model.ablation.tag();
  log_.notes = {
      fmt::format("epoch budget {} and early-stopping patience {} on validation M@20 are defaults chosen here",
                  cfg_.epochs, cfg_.patience),
      fmt::format("validation slice: last {} of train sessions by time ({} sessions)", cfg_.validation_fraction,
                  data_.validation_sessions.size()),
      fmt::format("effective beta {}", cfg_.model.effective_beta()),
  };
}

std::unique_ptr<Trainer> Trainer::resume(const Checkpoint& ckpt, TrainData data, const TrainConfig& cfg,
                                         std::vector<std::string>* warnings) {
  const ModelConfig& a = ckpt.config.model;
  const ModelConfig& b = cfg.model;
  if (a.embedding_dim != b.embedding_dim || a.heads != b.heads || a.max_position != b.max_position ||
      a.split_global_table != b.split_global_table || ckpt.n_items != data.n_items)
    throw ConfigError("resume: parameter shapes differ from the checkpoint");
  auto t = std::make_unique<Trainer>(cfg, std::move(data));
  const auto before = config_to_map(ckpt.config);
  const auto after = config_to_map(cfg);
  for (const auto& [k, v] : after) {
    const auto it = before.find(k);
    if (it != before.end() && it->second != v) {
      const std::string msg = fmt::format("resume: {} changed from {} to {}", k, it->second, v);
      if (warnings) warnings->push_back(msg);
      t->log_.notes.push_back(msg);
    }
  }
  load_parameters(t->model_->params(), ckpt.names, ckpt.params);
  if (ckpt.adam.m.size() != t->optimizer_.state().m.size()) throw IntegrityError("checkpoint: optimizer state size");
  t->optimizer_.state() = ckpt.adam;
  t->next_epoch_ = ckpt.next_epoch;
  t->best_epoch_ = ckpt.best_epoch;
  t->best_metric_ = ckpt.best_metric;
  t->bad_epochs_ = ckpt.bad_epochs;
  t->finished_ = ckpt.finished;
  t->best_params_ = ckpt.best_params;
  t->log_.epochs = ckpt.log.epochs;
  return t;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.n_items = data_.n_items;
  c.next_epoch = next_epoch_;
  c.best_epoch = best_epoch_;
  c.best_metric = best_metric_;
  c.bad_epochs = bad_epochs_;
  c.finished = finished_;
  const ParameterStore& store = model_->params();
  for (std::size_t i = 0; i < store.size(); ++i) c.names.push_back(store[i].name);
  c.params = snapshot(store);
  c.best_params = best_params_;
  c.adam = optimizer_.state();
  c.log = log_;
  return c;
}

void Trainer::restore_best() {
  if (best_params_.empty()) return;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < model_->params().size(); ++i) names.push_back(model_->params()[i].name);
  load_parameters(model_->params(), names, best_params_);
}

EpochRecord Trainer::run_epoch(int epoch) {
  const auto start = std::chrono::steady_clock::now();
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = cfg_.lr_for_epoch(epoch);
  const double beta = cfg_.model.effective_beta();

  BatchIterator batches(data_.train, cfg_.batch_size, true, derive_seed(cfg_.seed, kShuffleStream));
  std::vector<std::size_t> order = batches.order(epoch);
  if (cfg_.max_train_examples > 0 && order.size() > cfg_.max_train_examples) order.resize(cfg_.max_train_examples);

  ParameterStore& params = model_->params();
  double sum_main = 0.0, sum_con = 0.0, sum_total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size, ++batch_index) {
    const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + cfg_.batch_size)));
    const Batch batch = batches.make_batch(ids);
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(batch.size());
    for (std::size_t r = 0; r < batch.size(); ++r) prefixes.push_back(batch.prefix(r));

    std::mt19937_64 rng(derive_seed(cfg_.seed, kDropoutStream, static_cast<std::uint64_t>(epoch), batch_index));
    ad::Tape tape;
    ForwardOptions opts;
    opts.training = true;
    opts.rng = &rng;
    opts.compute_global = true;
    const ForwardResult fwd = model_->forward(tape, prefixes, opts);
    const LossBundle loss = model_->loss(
        tape, fwd, batch.labels, derive_seed(cfg_.seed, kNegativeStream, static_cast<std::uint64_t>(epoch), batch_index));
    const double main = loss.main.scalar();
    const double con = loss.contrastive.valid() ? loss.contrastive.scalar() : 0.0;
    const double total = loss.total.scalar();
    if (!std::isfinite(main) || !std::isfinite(con) || !std::isfinite(total)) {
      std::string where;
      if (!diagnostic_dir_.empty()) {
        std::filesystem::create_directories(diagnostic_dir_);
        const auto snap = diagnostic_dir_ / "diverged.ckpt";
        save_checkpoint(snap);
        where = " (last good state in " + snap.string() + ")";
      }
      throw DivergenceError(fmt::format("non-finite loss at epoch {} batch {}: main={} contrastive={} beta={}{}",
                                        epoch, batch_index, main, con, beta, where));
    }
    params.zero_grad();
    tape.backward(loss.total);
    if (cfg_.clip_grad) clip_grad_norm(params, cfg_.clip_norm);
    optimizer_.step(params, rec.lr, cfg_.weight_decay);

    const double w = static_cast<double>(batch.size());
    sum_main += w * main;
    sum_con += w * con;
    sum_total += w * total;
    rec.examples += batch.size();
    ++rec.batches;
  }
  const double n = static_cast<double>(std::max<std::size_t>(rec.examples, 1));
  rec.loss_main = sum_main / n;
  rec.loss_contrastive = sum_con / n;
  rec.loss_total = sum_total / n;

  if (!data_.validation.empty()) {
    const MetricsReport r = evaluate_ranker(ModelRanker(*model_), data_.validation, log_.ablation, cfg_.batch_size);
    rec.has_validation = true;
    rec.val_p10 = r.p(10);
    rec.val_p20 = r.p(20);
    rec.val_m10 = r.m(10);
    rec.val_m20 = r.m(20);
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void Trainer::run(int until_epoch, const std::function<void(const EpochRecord&)>& on_epoch) {
  const int stop = until_epoch <= 0 ? cfg_.epochs : std::min(until_epoch, cfg_.epochs);
  while (!finished_ && next_epoch_ < stop) {
    EpochRecord rec = run_epoch(next_epoch_);
    const double metric = rec.has_validation ? rec.val_m20 : static_cast<double>(next_epoch_);
    if (metric > best_metric_) {
      best_metric_ = metric;
      best_epoch_ = next_epoch_;
      best_params_ = snapshot(model_->params());
      bad_epochs_ = 0;
      rec.improved = true;
    } else {
      ++bad_epochs_;
    }
    log_.epochs.push_back(rec);
    ++next_epoch_;
    if (bad_epochs_ >= cfg_.patience || next_epoch_ >= cfg_.epochs) finished_ = true;
    if (on_epoch) on_epoch(rec);
  }
}

}  // namespace mgcot
