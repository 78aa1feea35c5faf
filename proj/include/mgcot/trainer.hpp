#pragma once

// Optimization loop: step-decayed AdamW, global-norm clipping, per-epoch
// validation with best-checkpoint selection, binary checkpoints and a
// JSON-lines run log. All randomness comes from streams derived from the
// configured seed, so a run is a pure function of (corpus, config).

#include "mgcot/config.hpp"
#include "mgcot/dataio.hpp"
#include "mgcot/graphs.hpp"
#include "mgcot/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mgcot {

std::string version_string();

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss_main = 0.0;
  double loss_contrastive = 0.0;
  double loss_total = 0.0;
  std::size_t examples = 0;
  std::size_t batches = 0;
  bool has_validation = false;
  double val_p10 = 0.0, val_p20 = 0.0, val_m10 = 0.0, val_m20 = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct RunLog {
  std::string config_text;
  std::string version;
  std::string ablation = "full";
  std::vector<std::string> notes;
  std::vector<EpochRecord> epochs;

  // Header record, then one record per epoch. Wall-clock is omitted when
  // include_wall_clock is false so two runs can be compared textually.
  std::string to_jsonl(bool include_wall_clock = true) const;
  static RunLog from_jsonl(const std::string& text);
  std::vector<double> total_losses() const;
};

struct TrainData {
  int n_items = 0;
  std::vector<Session> fit_sessions;         // train minus the validation slice
  std::vector<Session> validation_sessions;  // latest sessions of train
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> validation;
  GlobalItemGraph graph;  // from fit_sessions only
};

// Splits off the last validation_fraction of train sessions (by time) and
// builds the global graph from the remainder.
TrainData prepare_training_data(const Corpus& corpus, const TrainConfig& cfg);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(ParameterStore& params, double max_norm);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

// Adam with decoupled weight decay. Frozen rows keep their value and are
// never decayed; parameters with decay == false skip the decay term.
class AdamW {
 public:
  explicit AdamW(const ParameterStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParameterStore& params, double lr, double weight_decay);
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  double beta1_, beta2_, eps_;
  AdamState state_;
};

struct Checkpoint {
  TrainConfig config;
  int n_items = 0;
  int next_epoch = 0;
  int best_epoch = -1;
  double best_metric = -1.0;
  int bad_epochs = 0;
  bool finished = false;
  std::vector<std::string> names;
  std::vector<Matrix> params;
  std::vector<Matrix> best_params;
  AdamState adam;
  RunLog log;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws IntegrityError on a bad magic, version, size or checksum.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model with the checkpoint's best (or current) parameters loaded.
std::unique_ptr<MgcotModel> model_from_checkpoint(const Checkpoint& ckpt, bool best = true);

class Trainer {
 public:
  Trainer(TrainConfig cfg, TrainData data);

  // Continues from a checkpoint. Changes to beta, tau, schedule or budget
  // take effect and are reported in `warnings`; changes to parameter
  // shapes throw ConfigError.
  static std::unique_ptr<Trainer> resume(const Checkpoint& ckpt, TrainData data, const TrainConfig& cfg,
                                         std::vector<std::string>* warnings = nullptr);

  // Runs epochs until `until_epoch` (exclusive; <= 0 means the configured
  // budget) or early stopping.
  void run(int until_epoch = 0, const std::function<void(const EpochRecord&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const { write_checkpoint(checkpoint(), path); }
  // Where a diverged run writes its last good state.
  void set_diagnostic_dir(std::filesystem::path dir) { diagnostic_dir_ = std::move(dir); }

  MgcotModel& model() { return *model_; }
  const RunLog& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }
  int next_epoch() const { return next_epoch_; }
  bool finished() const { return finished_; }
  int best_epoch() const { return best_epoch_; }
  void restore_best();

 private:
  EpochRecord run_epoch(int epoch);

  TrainConfig cfg_;
  TrainData data_;
  std::unique_ptr<MgcotModel> model_;
  AdamW optimizer_;
  RunLog log_;
  int next_epoch_ = 0;
  int best_epoch_ = -1;
  double best_metric_ = -1.0;
  int bad_epochs_ = 0;
  bool finished_ = false;
  std::vector<Matrix> best_params_;
  std::filesystem::path diagnostic_dir_;
};

}  // namespace mgcot
