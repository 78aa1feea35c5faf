// mgcot command-line entry point.
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 runtime error.

#include "mgcot/attention.hpp"
#include "mgcot/config.hpp"
#include "mgcot/dataio.hpp"
#include "mgcot/errors.hpp"
#include "mgcot/evaluation.hpp"
#include "mgcot/graphs.hpp"
#include "mgcot/model.hpp"
#include "mgcot/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mgcot;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitRuntime = 4;

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw IoError("output directory exists and is not empty: " + dir.string() + " (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- shared training options ------------------------------------------

struct TrainOptions {
  std::string dataset;
  std::string config_file;
  std::vector<std::string> sets;
  std::string ablate;
  int epochs = 0;
  std::size_t batch_size = 0;
  int embedding_dim = 0;
  int heads = 0;
  int top_k = 0;
  double beta = -1.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_train_examples = 0;
  CLI::Option* beta_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* max_opt = nullptr;
};

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--dataset", o.dataset, "Per-dataset defaults: tmall, retailrocket, diginetica");
  cmd->add_option("--config", o.config_file, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "Config override key=value (repeatable)");
  cmd->add_option("--ablate", o.ablate, "no-neighbor-sessions, no-multi-attention, no-contrastive (comma separated)");
  cmd->add_option("--epochs", o.epochs, "Epoch budget")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", o.batch_size, "Batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--embedding-dim", o.embedding_dim, "Embedding size d")->check(CLI::PositiveNumber);
  cmd->add_option("--heads", o.heads, "Attention heads");
  cmd->add_option("--top-k", o.top_k, "Similar sessions per session")->check(CLI::PositiveNumber);
  o.beta_opt = cmd->add_option("--beta", o.beta, "Contrastive loss weight");
  cmd->add_option("--tau", o.tau, "Contrastive temperature")->check(CLI::PositiveNumber);
  o.seed_opt = cmd->add_option("--seed", o.seed, "Base seed");
  o.max_opt = cmd->add_option("--max-train-examples", o.max_train_examples, "Cap examples per epoch (0 = all)");
}

TrainConfig resolve_config(const TrainOptions& o, TrainConfig base = {}) {
  TrainConfig cfg = std::move(base);
  if (!o.dataset.empty()) apply_dataset_preset(cfg, o.dataset);
  if (!o.config_file.empty()) cfg = load_config_file(o.config_file, cfg);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.epochs > 0) cfg.epochs = o.epochs;
  if (o.batch_size > 0) cfg.batch_size = o.batch_size;
  if (o.embedding_dim > 0) cfg.model.embedding_dim = o.embedding_dim;
  if (o.heads > 0) cfg.model.heads = o.heads;
  if (o.top_k > 0) cfg.model.top_k = o.top_k;
  if (o.beta_opt && o.beta_opt->count() > 0) cfg.model.beta = o.beta;
  if (o.tau > 0.0) cfg.model.tau = o.tau;
  if (o.seed_opt && o.seed_opt->count() > 0) cfg.seed = o.seed;
  if (o.max_opt && o.max_opt->count() > 0) cfg.max_train_examples = o.max_train_examples;
  if (!o.ablate.empty()) cfg.model.ablation = Ablation::parse(o.ablate);
  if (cfg.model.ablation.no_contrastive && o.beta_opt && o.beta_opt->count() > 0 && o.beta != 0.0)
    throw ConfigError("--ablate no-contrastive conflicts with a nonzero --beta");
  cfg.validate();
  return cfg;
}

// ---- training ----------------------------------------------------------

void write_run_files(const fs::path& run, const Trainer& trainer) {
  trainer.save_checkpoint(run / "checkpoint.ckpt");
  write_text(run / "runlog.jsonl", trainer.log().to_jsonl(true));
}

void train_into(const fs::path& run, const Corpus& corpus, const TrainConfig& cfg, const Checkpoint* resume_from,
                bool quiet) {
  TrainData data = prepare_training_data(corpus, cfg);
  save_global_graph(data.graph, run / "global_graph.txt");
  std::unique_ptr<Trainer> trainer;
  if (resume_from) {
    std::vector<std::string> warnings;
    trainer = Trainer::resume(*resume_from, std::move(data), cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  } else {
    trainer = std::make_unique<Trainer>(cfg, std::move(data));
  }
  trainer->set_diagnostic_dir(run);
  write_text(run / "config.txt", config_to_text(cfg));
  write_text(run / "VERSION", version_string() + "\n");
  trainer->run(0, [&](const EpochRecord& e) {
    if (!quiet)
      std::cout << fmt::format("epoch {:>2}  lr {:.0e}  loss {:.5f} (main {:.5f}, contrastive {:.5f})  val P@20 {:.2f} M@20 {:.2f}{}  {:.1f}s\n",
                               e.epoch, e.lr, e.loss_total, e.loss_main, e.loss_contrastive, e.val_p20,
                               e.val_m20, e.improved ? " *" : "", e.seconds)
                << std::flush;
    write_run_files(run, *trainer);
  });
  write_run_files(run, *trainer);
}

MetricsReport evaluate_run(const fs::path& run, const Corpus& corpus, std::size_t batch_size) {
  const Checkpoint ckpt = read_checkpoint(run / "checkpoint.ckpt");
  const auto model = model_from_checkpoint(ckpt, true);
  return evaluate_ranker(ModelRanker(*model), corpus.test, ckpt.config.model.ablation.tag(),
                         batch_size > 0 ? batch_size : ckpt.config.batch_size);
}

// ---- commands ----------------------------------------------------------

struct PreprocessOptions {
  std::string input, out, name = "custom";
  bool force = false, header = false, synthetic = false, diginetica = false;
  std::string delimiter = ",";
  int session_col = 0, item_col = 1, time_col = 2, order_col = -1;
  std::size_t min_session_len = 2, min_item_freq = 5;
  double test_fraction = 0.2;
  double test_days = 0.0;
  SynthConfig synth;
};

int cmd_preprocess(const PreprocessOptions& o) {
  Corpus corpus;
  std::string name = o.name;
  if (o.synthetic) {
    corpus = synth_generate(o.synth).corpus;
    if (name == "custom") name = "synthetic";
  } else {
    if (o.input.empty()) throw ConfigError("preprocess: --input is required unless --synthetic is given");
    if (!fs::exists(o.input)) throw IoError("input not found: " + o.input);
    ColumnSchema schema;
    if (o.diginetica) {
      schema = {';', 0, 2, 4, 3, true};
      if (name == "custom") name = "Diginetica";
    } else {
      if (o.delimiter.size() != 1) throw ConfigError("--delimiter must be one character");
      schema = {o.delimiter == "\\t" ? '\t' : o.delimiter[0], o.session_col, o.item_col, o.time_col, o.order_col,
                o.header};
    }
    const LoadResult loaded = load_interactions(o.input, schema);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
    Sessionized s = sessionize_and_filter(loaded.interactions, {o.min_session_len, o.min_item_freq});
    SplitSpec split = TestFraction{o.test_fraction};
    if (o.test_days > 0.0 || o.diginetica) {
      const double days = o.test_days > 0.0 ? o.test_days : 7.0;
      std::int64_t max_time = 0;
      for (const auto& sess : s.sessions) max_time = std::max(max_time, sess.time_key);
      split = TimeBoundary{max_time - static_cast<std::int64_t>(days * 86400.0)};
    }
    corpus = temporal_split(std::move(s.sessions), s.vocab, split);
  }
  prepare_output_dir(o.out, o.force);
  save_corpus(corpus, o.out);
  std::cout << format_stats(corpus.stats, name);
  return 0;
}

int cmd_synth(const fs::path& out, const SynthConfig& cfg, bool force) {
  const SynthCorpus s = synth_generate(cfg);
  prepare_output_dir(out, force);
  save_corpus(s.corpus, out);
  nlohmann::json j;
  j["n_items"] = cfg.n_items;
  j["n_sessions"] = cfg.n_sessions;
  j["concentration"] = cfg.concentration;
  j["seed"] = cfg.seed;
  j["top1_mass"] = s.top1_mass;
  write_text(out / "generator.json", j.dump(2) + "\n");
  std::cout << format_stats(s.corpus.stats, "synthetic");
  return 0;
}

int cmd_build_graphs(const fs::path& corpus_dir, fs::path out, const TrainOptions& o, bool force) {
  const TrainConfig cfg = resolve_config(o);
  const Corpus corpus = load_corpus(corpus_dir);
  const TrainData data = prepare_training_data(corpus, cfg);
  if (out.empty()) out = corpus_dir / "global_graph.txt";
  if (fs::exists(out) && !force) throw IoError("graph file exists: " + out.string() + " (use --force)");
  save_global_graph(data.graph, out);
  std::cout << fmt::format("global graph: {} items, {} edges, cap {}, max cost {}\n", data.graph.n_items,
                           data.graph.edge_count(), data.graph.cap, data.graph.max_cost);
  return 0;
}

int cmd_train(const fs::path& corpus_dir, const fs::path& run, const TrainOptions& o, bool force, bool resume) {
  const Corpus corpus = load_corpus(corpus_dir);
  if (resume) {
    const Checkpoint ckpt = read_checkpoint(run / "checkpoint.ckpt");
    const TrainConfig cfg = resolve_config(o, ckpt.config);
    train_into(run, corpus, cfg, &ckpt, false);
  } else {
    const TrainConfig cfg = resolve_config(o);
    prepare_output_dir(run, force);
    train_into(run, corpus, cfg, nullptr, false);
  }
  std::cout << "run written to " << run.string() << '\n';
  return 0;
}

struct EvaluateOptions {
  std::string run, corpus, out;
  bool baselines = false, export_attention = false, force = false;
  std::size_t batch_size = 0;
  std::size_t attention_limit = 1000;
};

int cmd_evaluate(const EvaluateOptions& o) {
  const fs::path run = o.run;
  const Corpus corpus = load_corpus(o.corpus);
  const fs::path out = o.out.empty() ? run / "eval" : fs::path(o.out);
  prepare_output_dir(out, o.force);
  const Checkpoint ckpt = read_checkpoint(run / "checkpoint.ckpt");
  const auto model = model_from_checkpoint(ckpt, true);
  const std::size_t bs = o.batch_size > 0 ? o.batch_size : ckpt.config.batch_size;
  std::vector<MetricsReport> reports{
      evaluate_ranker(ModelRanker(*model), corpus.test, ckpt.config.model.ablation.tag(), bs)};
  if (o.baselines) {
    reports.push_back(evaluate_ranker(PopularityBaseline(corpus.train_sessions, corpus.vocab.item_count()),
                                      corpus.test, "baseline", bs));
    reports.push_back(evaluate_ranker(MarkovBaseline(corpus.train_sessions, corpus.vocab.item_count()), corpus.test,
                                      "baseline", bs));
  }
  write_text(out / "metrics.json", reports[0].to_json() + "\n");
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(nlohmann::json::parse(r.to_json()));
  write_text(out / "reports.json", all.dump(2) + "\n");
  const std::string table = format_reports(reports);
  write_text(out / "metrics.txt", table);
  std::cout << table;

  if (o.export_attention) {
    model->set_global_graph(load_global_graph(run / "global_graph.txt"));
    std::ofstream att(out / "attention.jsonl");
    if (!att) throw IoError("cannot write attention export");
    const std::size_t limit = std::min(o.attention_limit, corpus.test.size());
    for (std::size_t begin = 0; begin < limit; begin += bs) {
      const std::size_t end = std::min(limit, begin + bs);
      std::vector<std::vector<int>> prefixes;
      std::vector<int> labels;
      for (std::size_t i = begin; i < end; ++i) {
        prefixes.push_back(corpus.test[i].prefix);
        labels.push_back(corpus.test[i].label);
      }
      ad::Tape tape;
      AttentionTrace trace;
      ForwardOptions fo;
      fo.compute_global = true;
      fo.trace = &trace;
      model->forward(tape, prefixes, fo);
      write_attention_jsonl(att, prefixes, labels, trace, ckpt.config.model.heads);
    }
    std::cout << "attention weights written to " << (out / "attention.jsonl").string() << '\n';
  }
  return 0;
}

int cmd_ablate(const fs::path& corpus_dir, const fs::path& out, const TrainOptions& o, bool force) {
  if (!o.ablate.empty()) throw ConfigError("ablate runs every variant; --ablate is not accepted here");
  const TrainConfig base = resolve_config(o);
  const Corpus corpus = load_corpus(corpus_dir);
  prepare_output_dir(out, force);
  const std::vector<std::pair<std::string, Ablation>> variants = {
      {"full", {}},
      {"no-neighbor-sessions", {true, false, false}},
      {"no-multi-attention", {false, true, false}},
      {"no-contrastive", {false, false, true}},
  };
  std::vector<MetricsReport> reports;
  for (const auto& [tag, ablation] : variants) {
    TrainConfig cfg = base;
    cfg.model.ablation = ablation;
    const fs::path run = out / tag;
    fs::create_directories(run);
    std::cout << "== " << tag << '\n' << std::flush;
    train_into(run, corpus, cfg, nullptr, false);
    MetricsReport r = evaluate_run(run, corpus, cfg.batch_size);
    r.model = "MGCOT";
    write_text(run / "metrics.json", r.to_json() + "\n");
    reports.push_back(r);
  }
  const std::string table = format_reports(reports);
  write_text(out / "ablation.txt", table);
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(nlohmann::json::parse(r.to_json()));
  write_text(out / "ablation.json", all.dump(2) + "\n");
  std::cout << table;
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<MetricsReport> reports;
  for (const auto& d : dirs) {
    const fs::path dir = d;
    for (const fs::path& candidate : {dir / "metrics.json", dir / "eval" / "metrics.json"}) {
      if (fs::exists(candidate)) {
        MetricsReport r = MetricsReport::from_json(read_text(candidate));
        if (r.ablation == "full" || r.ablation.empty()) r.ablation = dir.filename().string();
        reports.push_back(std::move(r));
        break;
      }
    }
  }
  if (reports.empty()) throw IoError("report: no metrics.json found in the given directories");
  const std::string table = format_reports(reports);
  if (!out.empty()) write_text(out, table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view session recommender: preprocessing, training, evaluation"};
  app.require_subcommand(1);

  PreprocessOptions pre;
  auto* preprocess = app.add_subcommand("preprocess", "Sessionize, filter, split and augment a raw log");
  preprocess->add_option("--input", pre.input, "Raw interaction log");
  preprocess->add_option("--out", pre.out, "Corpus output directory")->required();
  preprocess->add_option("--name", pre.name, "Dataset name for the statistics table");
  preprocess->add_flag("--force", pre.force, "Overwrite the output directory");
  preprocess->add_flag("--header", pre.header, "First line is a header");
  preprocess->add_option("--delimiter", pre.delimiter, "Field delimiter (\\t for tab)");
  preprocess->add_option("--session-col", pre.session_col, "Session id column");
  preprocess->add_option("--item-col", pre.item_col, "Item id column");
  preprocess->add_option("--time-col", pre.time_col, "Timestamp column");
  preprocess->add_option("--order-col", pre.order_col, "Within-session order column (-1: none)");
  preprocess->add_flag("--diginetica", pre.diginetica, "Diginetica train-item-views.csv layout, last 7 days as test");
  preprocess->add_option("--min-session-len", pre.min_session_len, "Minimum session length");
  preprocess->add_option("--min-item-freq", pre.min_item_freq, "Minimum item support");
  preprocess->add_option("--test-fraction", pre.test_fraction, "Latest fraction of sessions used as test");
  preprocess->add_option("--test-days", pre.test_days, "Sessions in the last N days are test");
  preprocess->add_flag("--synthetic", pre.synthetic, "Generate a synthetic corpus instead of reading --input");
  preprocess->add_option("--synth-items", pre.synth.n_items, "Synthetic item count");
  preprocess->add_option("--synth-sessions", pre.synth.n_sessions, "Synthetic session count");
  preprocess->add_option("--seed", pre.synth.seed, "Synthetic generator seed");

  std::string synth_out;
  SynthConfig synth_cfg;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with known transitions");
  synth->add_option("--out", synth_out, "Corpus output directory")->required();
  synth->add_option("--items", synth_cfg.n_items, "Item count")->check(CLI::PositiveNumber);
  synth->add_option("--sessions", synth_cfg.n_sessions, "Session count")->check(CLI::PositiveNumber);
  synth->add_option("--concentration", synth_cfg.concentration, "Preferred-successor mass is c / (1 + c)");
  synth->add_option("--test-fraction", synth_cfg.test_fraction, "Latest fraction of sessions used as test");
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");
  synth->add_flag("--force", synth_force, "Overwrite the output directory");

  std::string graph_corpus, graph_out;
  bool graph_force = false;
  TrainOptions graph_opts;
  auto* graphs = app.add_subcommand("build-graphs", "Build the reweighted global item graph of a corpus");
  graphs->add_option("--corpus", graph_corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  graphs->add_option("--out", graph_out, "Graph file (default <corpus>/global_graph.txt)");
  graphs->add_option("--config", graph_opts.config_file, "key = value config file")->check(CLI::ExistingFile);
  graphs->add_option("--set", graph_opts.sets, "Config override key=value (repeatable)");
  graphs->add_flag("--force", graph_force, "Overwrite the graph file");

  std::string train_corpus, train_out;
  bool train_force = false, train_resume = false;
  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train a model into a run directory");
  train->add_option("--corpus", train_corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--force", train_force, "Overwrite the run directory");
  train->add_flag("--resume", train_resume, "Continue from <out>/checkpoint.ckpt");
  add_train_options(train, train_opts);

  EvaluateOptions eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a run on the test split");
  evaluate->add_option("--run", eval_opts.run, "Run directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--corpus", eval_opts.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", eval_opts.out, "Output directory (default <run>/eval)");
  evaluate->add_flag("--baselines", eval_opts.baselines, "Add popularity and Markov rows");
  evaluate->add_flag("--export-attention", eval_opts.export_attention, "Write per-session attention weights");
  evaluate->add_option("--attention-limit", eval_opts.attention_limit, "Test examples in the attention export");
  evaluate->add_option("--batch-size", eval_opts.batch_size, "Scoring batch size");
  evaluate->add_flag("--force", eval_opts.force, "Overwrite the output directory");

  std::string ablate_corpus, ablate_out;
  bool ablate_force = false;
  TrainOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the full model and its three ablations");
  ablate->add_option("--corpus", ablate_corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--out", ablate_out, "Output directory")->required();
  ablate->add_flag("--force", ablate_force, "Overwrite the output directory");
  add_train_options(ablate, ablate_opts);

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate metrics of run directories into one table");
  report->add_option("runs", report_dirs, "Run or evaluation directories")->required();
  report->add_option("--out", report_out, "Write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*preprocess) return cmd_preprocess(pre);
    if (*synth) return cmd_synth(synth_out, synth_cfg, synth_force);
    if (*graphs) return cmd_build_graphs(graph_corpus, graph_out, graph_opts, graph_force);
    if (*train) return cmd_train(train_corpus, train_out, train_opts, train_force, train_resume);
    if (*evaluate) return cmd_evaluate(eval_opts);
    if (*ablate) return cmd_ablate(ablate_corpus, ablate_out, ablate_opts, ablate_force);
    if (*report) return cmd_report(report_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
