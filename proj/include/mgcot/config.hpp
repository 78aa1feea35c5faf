#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mgcot {

// Component ablations. Names match the CLI flags.
struct Ablation {
  bool no_neighbor_sessions = false;
  bool no_multi_attention = false;
  bool no_contrastive = false;

  // "full" or a '+'-joined list of the active flags.
  std::string tag() const;
  // Accepts "full", "none", or a comma/plus separated list of
  // no-neighbor-sessions, no-multi-attention, no-contrastive.
  static Ablation parse(const std::string& text);
  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  int embedding_dim = 100;
  int heads = 1;
  double dropout = 0.2;
  double adj_dropout = 0.2;
  int ggnn_steps = 1;
  int top_k = 3;
  double beta = 5.0;
  double tau = 1.0;
  int max_position = 200;
  bool layer_norm = true;
  bool gcn_relu = false;
  bool split_global_table = false;
  int entmax_iters = 30;
  Ablation ablation;

  int width() const { return 2 * embedding_dim; }
  // beta with the no-contrastive ablation applied.
  double effective_beta() const { return ablation.no_contrastive ? 0.0 : beta; }
  void validate() const;
};

struct GraphConfig {
  int sp_cap = 50;  // <= 0 disables truncation
  bool directed_global = false;
};

struct TrainConfig {
  std::string dataset = "custom";
  ModelConfig model;
  GraphConfig graph;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  double lr_decay = 0.1;
  int lr_decay_every = 3;
  double weight_decay = 1e-5;
  int epochs = 10;
  int patience = 3;
  bool clip_grad = true;
  double clip_norm = 5.0;
  double validation_fraction = 0.1;
  std::uint64_t seed = 2024;
  // Caps examples per epoch (0 = all); used for quick runs.
  std::size_t max_train_examples = 0;

  void validate() const;
  // lr(epoch) = learning_rate * lr_decay^floor(epoch / lr_decay_every), epoch 0-based.
  double lr_for_epoch(int epoch) const;
};

// Per-dataset defaults: top-k similar sessions, beta and head count.
// Known names: tmall, retailrocket, diginetica. Throws ConfigError otherwise.
void apply_dataset_preset(TrainConfig& cfg, const std::string& dataset);

// key=value text form. Unknown keys throw ConfigError.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> config_to_map(const TrainConfig& cfg);
std::string config_to_text(const TrainConfig& cfg);
TrainConfig config_from_text(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});

}  // namespace mgcot
