#include "mgcot/config.hpp"

#include "mgcot/errors.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace mgcot {

std::string Ablation::tag() const {
  std::vector<std::string> parts;
  if (no_neighbor_sessions) parts.emplace_back("no-neighbor-sessions");
  if (no_multi_attention) parts.emplace_back("no-multi-attention");
  if (no_contrastive) parts.emplace_back("no-contrastive");
  if (parts.empty()) return "full";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

Ablation Ablation::parse(const std::string& text) {
  Ablation a;
  std::string token;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), '+', ',');
  std::istringstream in(norm);
  while (std::getline(in, token, ',')) {
    if (token.empty() || token == "full" || token == "none") continue;
    if (token == "no-neighbor-sessions") a.no_neighbor_sessions = true;
    else if (token == "no-multi-attention") a.no_multi_attention = true;
    else if (token == "no-contrastive") a.no_contrastive = true;
    else throw ConfigError("unknown ablation flag: " + token);
  }
  return a;
}

void ModelConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (heads != 1 && heads != 2 && heads != 4) throw ConfigError("heads must be 1, 2 or 4");
  if (width() % heads != 0) throw ConfigError("2 * embedding_dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(adj_dropout >= 0.0 && adj_dropout < 1.0)) throw ConfigError("adj_dropout must be in [0, 1)");
  if (ggnn_steps < 0) throw ConfigError("ggnn_steps must be >= 0");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (max_position < 1) throw ConfigError("max_position must be >= 1");
  if (entmax_iters < 1) throw ConfigError("entmax_iters must be >= 1");
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in [0, 1)");
}

double TrainConfig::lr_for_epoch(int epoch) const {
  double lr = learning_rate;
  for (int i = 0; i < epoch / lr_decay_every; ++i) lr *= lr_decay;
  return lr;
}

void apply_dataset_preset(TrainConfig& cfg, const std::string& dataset) {
  if (dataset == "tmall") {
    cfg.model.top_k = 6;
    cfg.model.beta = 0.05;
    cfg.model.heads = 2;
  } else if (dataset == "retailrocket") {
    cfg.model.top_k = 2;
    cfg.model.beta = 5.0;
    cfg.model.heads = 2;
  } else if (dataset == "diginetica") {
    cfg.model.top_k = 3;
    cfg.model.beta = 5.0;
    cfg.model.heads = 1;
  } else {
    throw ConfigError("unknown dataset preset: " + dataset);
  }
  cfg.dataset = dataset;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  if (!(in >> out) || !in.eof()) throw ConfigError(fmt::format("bad value for {}: '{}'", key, v));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(fmt::format("bad boolean for {}: '{}'", key, v));
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](TrainConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"embedding_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.embedding_dim = parse_number<int>(k, v); }},
      {"heads", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.heads = parse_number<int>(k, v); }},
      {"dropout", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.dropout = parse_number<double>(k, v); }},
      {"adj_dropout", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.adj_dropout = parse_number<double>(k, v); }},
      {"ggnn_steps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.ggnn_steps = parse_number<int>(k, v); }},
      {"top_k", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.top_k = parse_number<int>(k, v); }},
      {"beta", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.beta = parse_number<double>(k, v); }},
      {"tau", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.tau = parse_number<double>(k, v); }},
      {"max_position", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.max_position = parse_number<int>(k, v); }},
      {"layer_norm", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.layer_norm = parse_bool(k, v); }},
      {"gcn_relu", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.gcn_relu = parse_bool(k, v); }},
      {"split_global_table", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.split_global_table = parse_bool(k, v); }},
      {"entmax_iters", [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.entmax_iters = parse_number<int>(k, v); }},
      {"ablation", [](TrainConfig& c, const std::string&, const std::string& v) { c.model.ablation = Ablation::parse(v); }},
      {"sp_cap", [](TrainConfig& c, const std::string& k, const std::string& v) { c.graph.sp_cap = parse_number<int>(k, v); }},
      {"directed_global", [](TrainConfig& c, const std::string& k, const std::string& v) { c.graph.directed_global = parse_bool(k, v); }},
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_number<std::size_t>(k, v); }},
      {"learning_rate", [](TrainConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"lr_decay", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lr_decay = parse_number<double>(k, v); }},
      {"lr_decay_every", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lr_decay_every = parse_number<int>(k, v); }},
      {"weight_decay", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_decay = parse_number<double>(k, v); }},
      {"epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.epochs = parse_number<int>(k, v); }},
      {"patience", [](TrainConfig& c, const std::string& k, const std::string& v) { c.patience = parse_number<int>(k, v); }},
      {"clip_grad", [](TrainConfig& c, const std::string& k, const std::string& v) { c.clip_grad = parse_bool(k, v); }},
      {"clip_norm", [](TrainConfig& c, const std::string& k, const std::string& v) { c.clip_norm = parse_number<double>(k, v); }},
      {"validation_fraction", [](TrainConfig& c, const std::string& k, const std::string& v) { c.validation_fraction = parse_number<double>(k, v); }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"max_train_examples", [](TrainConfig& c, const std::string& k, const std::string& v) { c.max_train_examples = parse_number<std::size_t>(k, v); }},
  };
  return table;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key: " + key);
  it->second(cfg, key, value);
}

std::map<std::string, std::string> config_to_map(const TrainConfig& c) {
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"dataset", c.dataset},
      {"embedding_dim", std::to_string(c.model.embedding_dim)},
      {"heads", std::to_string(c.model.heads)},
      {"dropout", fmt_double(c.model.dropout)},
      {"adj_dropout", fmt_double(c.model.adj_dropout)},
      {"ggnn_steps", std::to_string(c.model.ggnn_steps)},
      {"top_k", std::to_string(c.model.top_k)},
      {"beta", fmt_double(c.model.beta)},
      {"tau", fmt_double(c.model.tau)},
      {"max_position", std::to_string(c.model.max_position)},
      {"layer_norm", b(c.model.layer_norm)},
      {"gcn_relu", b(c.model.gcn_relu)},
      {"split_global_table", b(c.model.split_global_table)},
      {"entmax_iters", std::to_string(c.model.entmax_iters)},
      {"ablation", c.model.ablation.tag()},
      {"sp_cap", std::to_string(c.graph.sp_cap)},
      {"directed_global", b(c.graph.directed_global)},
      {"batch_size", std::to_string(c.batch_size)},
      {"learning_rate", fmt_double(c.learning_rate)},
      {"lr_decay", fmt_double(c.lr_decay)},
      {"lr_decay_every", std::to_string(c.lr_decay_every)},
      {"weight_decay", fmt_double(c.weight_decay)},
      {"epochs", std::to_string(c.epochs)},
      {"patience", std::to_string(c.patience)},
      {"clip_grad", b(c.clip_grad)},
      {"clip_norm", fmt_double(c.clip_norm)},
      {"validation_fraction", fmt_double(c.validation_fraction)},
      {"seed", std::to_string(c.seed)},
      {"max_train_examples", std::to_string(c.max_train_examples)},
  };
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_to_map(cfg)) out += k + " = " + v + "\n";
  return out;
}

TrainConfig config_from_text(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    set_config_value(base, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), std::move(base));
}

}  // namespace mgcot
