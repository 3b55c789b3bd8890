// fids: federated intrusion-detection simulator CLI.
//
// Subcommands: synth, tokenizer, train, fed, quantize, eval.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
//
// A JSON config file (--config) supplies defaults; command-line flags win.
// The merged effective configuration is echoed into output artifacts.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fids/bbpe.hpp"
#include "fids/checkpoint.hpp"
#include "fids/eval.hpp"
#include "fids/fed.hpp"
#include "fids/flow.hpp"
#include "fids/model.hpp"
#include "fids/partition.hpp"
#include "fids/quantize.hpp"
#include "fids/trainer.hpp"
#include "nlohmann/json.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Defaults mirror the base configuration: lr 5e-5, wd 1e-3, batch 32,
// epochs 4, dropout 0.1, seq 512, vocab 5000, alpha 0.07.
struct ExperimentConfig {
  std::string data_path;
  std::string label_column = "Attack_type";
  double fraction = 1.0;

  std::size_t layers = 4;
  std::size_t hidden = 256;
  std::size_t heads = 4;
  std::size_t seq_len = 512;
  std::size_t vocab = 5000;
  double dropout = 0.1;

  double lr = 5e-5;
  double weight_decay = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 4;

  std::size_t clients = 10;
  double alpha = 0.07;
  bool iid = false;
  std::size_t rounds = 10;
  std::size_t local_epochs = 1;
  std::size_t workers = 1;

  std::uint64_t seed = 0;
  std::string out_dir = "out";

  fids::ModelConfig model_config(std::size_t num_classes) const {
    fids::ModelConfig m;
    m.num_layers = layers;
    m.hidden = hidden;
    m.heads = heads;
    m.intermediate = 4 * hidden;
    m.seq_len = seq_len;
    m.vocab = vocab;
    m.num_classes = num_classes;
    m.dropout = dropout;
    return m;
  }

  fids::TrainOptions train_options() const {
    fids::TrainOptions t;
    t.adam.lr = lr;
    t.adam.weight_decay = weight_decay;
    t.batch_size = batch;
    return t;
  }

  json to_json() const {
    return {{"dataset", {{"path", data_path}, {"label_column", label_column},
                         {"fraction", fraction}}},
            {"model", {{"layers", layers}, {"hidden", hidden}, {"heads", heads},
                       {"intermediate", 4 * hidden}, {"seq_len", seq_len},
                       {"vocab", vocab}, {"dropout", dropout}}},
            {"training", {{"lr", lr}, {"weight_decay", weight_decay}, {"batch", batch},
                          {"epochs", epochs}}},
            {"federated", {{"clients", clients}, {"alpha", alpha}, {"iid", iid},
                           {"rounds", rounds}, {"local_epochs", local_epochs},
                           {"workers", workers}}},
            {"seed", seed},
            {"out_dir", out_dir}};
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config file: ") + e.what());
    }
    auto get = [](const json& o, const char* key, auto& out) {
      if (o.contains(key)) out = o.at(key).get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("dataset")) {
      get(j["dataset"], "path", data_path);
      get(j["dataset"], "label_column", label_column);
      get(j["dataset"], "fraction", fraction);
    }
    if (j.contains("model")) {
      get(j["model"], "layers", layers);
      get(j["model"], "hidden", hidden);
      get(j["model"], "heads", heads);
      get(j["model"], "seq_len", seq_len);
      get(j["model"], "vocab", vocab);
      get(j["model"], "dropout", dropout);
    }
    if (j.contains("training")) {
      get(j["training"], "lr", lr);
      get(j["training"], "weight_decay", weight_decay);
      get(j["training"], "batch", batch);
      get(j["training"], "epochs", epochs);
    }
    if (j.contains("federated")) {
      get(j["federated"], "clients", clients);
      get(j["federated"], "alpha", alpha);
      get(j["federated"], "iid", iid);
      get(j["federated"], "rounds", rounds);
      get(j["federated"], "local_epochs", local_epochs);
      get(j["federated"], "workers", workers);
    }
    get(j, "seed", seed);
    get(j, "out_dir", out_dir);
  }
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::exists(path)) throw UsageError(what + " file not found: " + path);
}

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

struct PreparedData {
  std::vector<fids::FlowRecord> train_records, test_records;
  fids::DatasetManifest manifest;
  fids::TokenizerModel tokenizer;
  std::vector<fids::LabeledExample> train_examples, test_examples;
};

// Shared data path for train/fed/eval: load, 80/20 stratified split, train
// (or load) the tokenizer on the hashed training split, tokenize both
// splits.
PreparedData prepare_data(const ExperimentConfig& cfg,
                          const std::optional<std::string>& tokenizer_path) {
  require_file(cfg.data_path, "--data");
  fids::LoadOptions opt;
  opt.label_column = cfg.label_column;
  opt.fraction = cfg.fraction;
  opt.seed = cfg.seed;
  auto records = fids::load_csv(cfg.data_path, opt);
  PreparedData d;
  auto split = fids::split_train_test(records, 0.8, cfg.seed);
  d.train_records = std::move(split.train);
  d.test_records = std::move(split.test);
  d.manifest = std::move(split.manifest);
  d.manifest.source_digest = fids::sha256_file_hex(cfg.data_path);

  if (tokenizer_path) {
    require_file(*tokenizer_path, "--tokenizer");
    d.tokenizer = fids::load_tokenizer(*tokenizer_path);
  } else {
    std::vector<std::string> corpus;
    corpus.reserve(d.train_records.size());
    for (const auto& r : d.train_records) corpus.push_back(fids::hash_encode(r));
    d.tokenizer = fids::train_vocab(corpus, cfg.vocab);
  }
  d.train_examples =
      fids::build_examples(d.train_records, d.tokenizer, d.manifest.class_names, cfg.seq_len);
  d.test_examples =
      fids::build_examples(d.test_records, d.tokenizer, d.manifest.class_names, cfg.seq_len);
  return d;
}

void write_manifest(const ExperimentConfig& cfg, const fids::DatasetManifest& manifest) {
  json j = manifest.to_json();
  j["config"] = cfg.to_json();
  write_text(fs::path(cfg.out_dir) / "manifest.json", j.dump(2) + "\n");
}

void write_metrics(const ExperimentConfig& cfg, const fids::ConfusionMatrix& cm,
                   const std::vector<std::string>& class_names, const fs::path& dir) {
  json j = fids::metrics_to_json(cm, class_names);
  j["config"] = cfg.to_json();
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  write_text(dir / "confusion.csv", cm.to_csv());
}

fids::Checkpoint make_checkpoint(const fids::ModelWeights<float>& w, const fids::ModelConfig& mc,
                                 const std::vector<std::string>& class_names) {
  auto ckpt = fids::checkpoint_from_weights(w, mc);
  ckpt.class_names = class_names;
  return ckpt;
}

int cmd_synth(const fids::SyntheticSpec& spec, const std::string& out_path) {
  if (out_path.empty()) throw UsageError("--out is required");
  fids::generate_synthetic_file(spec, out_path);
  json manifest{{"classes", spec.num_classes},
                {"fields", spec.num_fields},
                {"rows_per_class", spec.rows_per_class},
                {"noise", spec.noise},
                {"seed", spec.seed},
                {"rows", spec.num_classes * spec.rows_per_class},
                {"source_sha256", fids::sha256_file_hex(out_path)}};
  write_text(out_path + ".manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << out_path << " (" << spec.num_classes * spec.rows_per_class
            << " rows)\n";
  return 0;
}

int cmd_tokenizer(const ExperimentConfig& cfg, const std::string& out_path) {
  if (out_path.empty()) throw UsageError("--out is required");
  if (cfg.vocab < fids::kBaseVocab)
    throw UsageError("--vocab must be >= " + std::to_string(fids::kBaseVocab) +
                     " (byte floor)");
  require_file(cfg.data_path, "--data");
  fids::LoadOptions opt;
  opt.label_column = cfg.label_column;
  opt.fraction = cfg.fraction;
  opt.seed = cfg.seed;
  auto records = fids::load_csv(cfg.data_path, opt);
  auto split = fids::split_train_test(records, 0.8, cfg.seed);
  std::vector<std::string> corpus;
  corpus.reserve(split.train.size());
  for (const auto& r : split.train) corpus.push_back(fids::hash_encode(r));
  const auto model = fids::train_vocab(corpus, cfg.vocab);
  fids::save_tokenizer(model, out_path);
  std::cout << "trained tokenizer: vocab " << model.vocab_size() << " (" << model.merges.size()
            << " merges) -> " << out_path << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::optional<std::string>& tokenizer_path) {
  auto data = prepare_data(cfg, tokenizer_path);
  const auto mc = cfg.model_config(data.manifest.class_names.size());
  fids::validate_config(mc);
  fs::create_directories(cfg.out_dir);
  write_manifest(cfg, data.manifest);
  fids::save_tokenizer(data.tokenizer, (fs::path(cfg.out_dir) / "tokenizer.bbpe").string());
  write_text(fs::path(cfg.out_dir) / "config.json", cfg.to_json().dump(2) + "\n");

  auto weights = fids::init_model<float>(mc, cfg.seed);
  fids::AdamState<float> adam(cfg.train_options().adam, weights.tensors);
  const auto opts = cfg.train_options();
  const auto train_labels = fids::labels_of(data.train_examples);
  const auto test_labels = fids::labels_of(data.test_examples);
  std::vector<std::size_t> all_idx(data.train_examples.size());
  std::iota(all_idx.begin(), all_idx.end(), 0);

  std::ostringstream epochs_jsonl;
  fids::train_epochs(weights, adam, mc, data.train_examples, all_idx, cfg.epochs,
                     fids::client_stream_seed(cfg.seed, 0), 0, opts,
                     [&](std::size_t epoch, double train_loss) {
                       const double train_acc = fids::accuracy(
                           fids::predict_all(weights, mc, data.train_examples, opts.batch_size),
                           train_labels);
                       const double eval_acc = fids::accuracy(
                           fids::predict_all(weights, mc, data.test_examples, opts.batch_size),
                           test_labels);
                       json line{{"epoch", epoch},
                                 {"train_loss", train_loss},
                                 {"train_acc", train_acc},
                                 {"eval_acc", eval_acc}};
                       epochs_jsonl << line.dump() << "\n";
                       std::cout << line.dump() << "\n";
                     });
  write_text(fs::path(cfg.out_dir) / "epochs.jsonl", epochs_jsonl.str());

  const auto preds = fids::predict_all(weights, mc, data.test_examples, opts.batch_size);
  const auto cm = fids::confusion(preds, test_labels, mc.num_classes);
  write_metrics(cfg, cm, data.manifest.class_names, cfg.out_dir);
  fids::save_checkpoint(make_checkpoint(weights, mc, data.manifest.class_names),
                        (fs::path(cfg.out_dir) / "model.fids").string());
  std::cout << "final test accuracy: " << cm.accuracy() << "\n";
  return 0;
}

int cmd_fed(const ExperimentConfig& cfg, const std::optional<std::string>& tokenizer_path) {
  if (cfg.clients < 1) throw UsageError("--clients must be >= 1");
  if (!cfg.iid && cfg.alpha <= 0.0) throw UsageError("--alpha must be > 0 (or pass --iid)");
  auto data = prepare_data(cfg, tokenizer_path);
  const auto mc = cfg.model_config(data.manifest.class_names.size());
  fids::validate_config(mc);
  fs::create_directories(cfg.out_dir);
  write_manifest(cfg, data.manifest);
  fids::save_tokenizer(data.tokenizer, (fs::path(cfg.out_dir) / "tokenizer.bbpe").string());
  write_text(fs::path(cfg.out_dir) / "config.json", cfg.to_json().dump(2) + "\n");

  fids::PartitionPlan plan;
  if (cfg.iid) {
    plan = fids::split_iid(data.train_examples.size(), cfg.clients, cfg.seed);
  } else {
    plan = fids::split_dirichlet(fids::labels_of(data.train_examples), cfg.clients, cfg.alpha,
                                 cfg.seed);
  }
  write_text(fs::path(cfg.out_dir) / "partition.json", plan.to_json().dump(2) + "\n");

  fids::RoundConfig rc;
  rc.rounds = cfg.rounds;
  rc.local_epochs = cfg.local_epochs;
  rc.train = cfg.train_options();
  rc.seed = cfg.seed;
  rc.workers = cfg.workers;

  std::ofstream rounds_out(fs::path(cfg.out_dir) / "rounds.jsonl", std::ios::binary);
  auto result = fids::run_simulation<float>(mc, rc, plan, data.train_examples,
                                            data.test_examples, [&](const fids::RoundReport& r) {
                                              rounds_out << r.to_json().dump() << "\n";
                                              rounds_out.flush();
                                              std::cout << r.to_json().dump() << "\n";
                                            });

  const auto test_labels = fids::labels_of(data.test_examples);
  const auto preds =
      fids::predict_all(result.global, mc, data.test_examples, rc.train.batch_size);
  const auto cm = fids::confusion(preds, test_labels, mc.num_classes);
  write_metrics(cfg, cm, data.manifest.class_names, cfg.out_dir);
  fids::save_checkpoint(make_checkpoint(result.global, mc, data.manifest.class_names),
                        (fs::path(cfg.out_dir) / "model.fids").string());
  std::cout << "final global accuracy: " << cm.accuracy() << "\n";
  return 0;
}

// Rebuilds the evaluation examples for a trained checkpoint (same seed =>
// same split, class order from the checkpoint).
std::vector<fids::LabeledExample> eval_examples(const fids::Checkpoint& ckpt,
                                                const ExperimentConfig& cfg,
                                                const std::string& tokenizer_path) {
  require_file(cfg.data_path, "--data");
  require_file(tokenizer_path, "--tokenizer");
  fids::LoadOptions opt;
  opt.label_column = cfg.label_column;
  opt.fraction = cfg.fraction;
  opt.seed = cfg.seed;
  auto records = fids::load_csv(cfg.data_path, opt);
  auto split = fids::split_train_test(records, 0.8, cfg.seed);
  const auto tokenizer = fids::load_tokenizer(tokenizer_path);
  const auto& names =
      ckpt.class_names.empty() ? split.manifest.class_names : ckpt.class_names;
  return fids::build_examples(split.test, tokenizer, names, ckpt.config.seq_len);
}

int cmd_quantize(const std::string& model_path, const std::string& out_path,
                 const std::string& policy_name, const std::vector<std::string>& policy_tensors,
                 const ExperimentConfig& cfg, const std::string& tokenizer_path) {
  require_file(model_path, "--model");
  if (out_path.empty()) throw UsageError("--out is required");
  auto ckpt = fids::load_checkpoint(model_path);

  fids::QuantizePolicy policy;
  if (policy_name == "default") {
    policy.mode = fids::QuantizePolicy::Mode::kDefault;
  } else if (policy_name == "none") {
    policy.mode = fids::QuantizePolicy::Mode::kNone;
  } else if (policy_name == "explicit") {
    policy.mode = fids::QuantizePolicy::Mode::kExplicit;
    policy.tensor_names = policy_tensors;
  } else {
    throw UsageError("--policy must be default, none or explicit");
  }

  auto [quantized, report] = fids::quantize_model(ckpt, policy);
  quantized.class_names = ckpt.class_names;
  fids::save_checkpoint(quantized, out_path);

  if (!cfg.data_path.empty()) {
    auto examples = eval_examples(ckpt, cfg, tokenizer_path);
    const auto labels = fids::labels_of(examples);
    auto w_before = fids::weights_from_checkpoint(ckpt);
    auto w_after = fids::weights_from_checkpoint(quantized);
    report.accuracy_before = fids::accuracy(
        fids::predict_all(w_before, ckpt.config, examples, cfg.batch), labels);
    report.accuracy_after = fids::accuracy(
        fids::predict_all(w_after, ckpt.config, examples, cfg.batch), labels);
  }

  json j = report.to_json();
  // Size ladder analogue: a 12-layer/H=768 full-size encoder, this reduced
  // architecture, and the quantized artifact.
  fids::ModelConfig full;
  full.num_layers = 12;
  full.hidden = 768;
  full.heads = 12;
  full.intermediate = 4 * 768;
  full.seq_len = ckpt.config.seq_len;
  full.vocab = 30522;
  full.num_classes = ckpt.config.num_classes;
  j["size_comparison_bytes"] = {{"full_encoder_estimate", fids::estimate_disk_bytes(full)},
                                {"reduced_model", report.file_bytes_before},
                                {"quantized_model", report.file_bytes_after}};
  write_text(out_path + ".report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const ExperimentConfig& cfg,
             const std::string& tokenizer_path, bool do_time, std::size_t reps,
             std::size_t warmup) {
  require_file(model_path, "--model");
  auto ckpt = fids::load_checkpoint(model_path);
  auto weights = fids::weights_from_checkpoint(ckpt);

  const auto base_count = fids::count_params(ckpt.config);
  std::cout << "model parameters: " << base_count << " (~" << fids::estimate_disk_bytes(ckpt.config)
            << " bytes at f32)\n";
  fids::ModelConfig table_cfg;
  table_cfg.num_classes = 15;
  std::cout << "base config (L=4,H=256,A=4,FFN=1024,S=512,V=5000,C=15) parameters: "
            << fids::count_params(table_cfg)
            << "; securityBERT reported 11,174,415 (larger: that model keeps the BERT "
               "vocabulary, pooler and token-type embeddings)\n";

  auto examples = eval_examples(ckpt, cfg, tokenizer_path);
  const auto labels = fids::labels_of(examples);
  const auto preds = fids::predict_all(weights, ckpt.config, examples, cfg.batch);
  const auto cm = fids::confusion(preds, labels, ckpt.config.num_classes);
  fs::create_directories(cfg.out_dir);
  write_metrics(cfg, cm, ckpt.class_names, cfg.out_dir);
  std::cout << "accuracy: " << cm.accuracy() << " on " << examples.size() << " examples\n";

  if (do_time) {
    std::vector<std::size_t> one{0};
    auto batch = fids::make_batch<float>(examples, one, 0, 1);
    std::string hw = "host: " + std::to_string(std::thread::hardware_concurrency()) +
                     " hardware threads";
    const auto timing = fids::time_inference(weights, ckpt.config, batch, reps, warmup, hw);
    write_text(fs::path(cfg.out_dir) / "timing.json", timing.to_json().dump(2) + "\n");
    std::cout << "inference latency: median " << timing.median_seconds << " s, p95 "
              << timing.p95_seconds << " s over " << reps << " reps\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);

  ExperimentConfig cfg;
  // --config is honored before the regular flag pass so flags can override
  // file-provided values.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        cfg.load_file(argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"fids: federated intrusion-detection simulator"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON experiment config (flags override)")
      ->expected(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "global seed");
    sub->add_option("--out-dir", cfg.out_dir, "output directory");
    sub->add_option("--label-column", cfg.label_column, "CSV label column name");
    sub->add_option("--fraction", cfg.fraction, "stratified subsample fraction");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--layers", cfg.layers, "encoder layers");
    sub->add_option("--hidden", cfg.hidden, "hidden size H (FFN is 4H)");
    sub->add_option("--heads", cfg.heads, "attention heads");
    sub->add_option("--seq-len", cfg.seq_len, "sequence length");
    sub->add_option("--vocab", cfg.vocab, "tokenizer/model vocabulary size");
    sub->add_option("--dropout", cfg.dropout, "dropout rate");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--lr", cfg.lr, "learning rate");
    sub->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
    sub->add_option("--batch", cfg.batch, "batch size");
  };

  // synth
  fids::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic flow dataset");
  synth->add_option("--classes", synth_spec.num_classes, "number of classes");
  synth->add_option("--fields", synth_spec.num_fields, "number of feature columns");
  synth->add_option("--rows-per-class", synth_spec.rows_per_class, "rows per class");
  synth->add_option("--noise", synth_spec.noise, "per-field flip probability");
  synth->add_option("--seed", synth_spec.seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path");

  // tokenizer
  std::string tok_out;
  auto* tok = app.add_subcommand("tokenizer", "train and save the BBPE tokenizer");
  tok->add_option("--data", cfg.data_path, "input CSV");
  tok->add_option("--vocab", cfg.vocab, "target vocabulary size");
  tok->add_option("--out", tok_out, "output .bbpe path");
  add_common(tok);

  // train
  std::string train_tokenizer;
  auto* train = app.add_subcommand("train", "centralized training");
  train->add_option("--data", cfg.data_path, "input CSV");
  train->add_option("--epochs", cfg.epochs, "training epochs");
  train->add_option("--tokenizer", train_tokenizer, "pre-trained tokenizer (.bbpe)");
  add_common(train);
  add_model(train);
  add_training(train);

  // fed
  std::string fed_tokenizer;
  bool fed_iid = false;
  auto* fed = app.add_subcommand("fed", "federated simulation");
  fed->add_option("--data", cfg.data_path, "input CSV");
  fed->add_option("--clients", cfg.clients, "number of clients K");
  fed->add_option("--alpha", cfg.alpha, "Dirichlet concentration");
  fed->add_flag("--iid", fed_iid, "IID partitioning (overrides --alpha)");
  fed->add_option("--rounds", cfg.rounds, "communication rounds");
  fed->add_option("--local-epochs", cfg.local_epochs, "local epochs per round");
  fed->add_option("--workers", cfg.workers, "max concurrent client tasks");
  fed->add_option("--tokenizer", fed_tokenizer, "pre-trained tokenizer (.bbpe)");
  add_common(fed);
  add_model(fed);
  add_training(fed);

  // quantize
  std::string q_model, q_out, q_policy = "default", q_tokenizer;
  std::vector<std::string> q_tensors;
  auto* quant = app.add_subcommand("quantize", "compress a checkpoint to int8 weights");
  quant->add_option("--model", q_model, "input .fids checkpoint");
  quant->add_option("--out", q_out, "output .fids checkpoint");
  quant->add_option("--policy", q_policy, "default | none | explicit");
  quant->add_option("--tensors", q_tensors, "tensor names for --policy explicit");
  quant->add_option("--eval", cfg.data_path, "CSV for before/after accuracy");
  quant->add_option("--tokenizer", q_tokenizer, "tokenizer used at training time");
  add_common(quant);

  // eval
  std::string e_model, e_tokenizer;
  bool e_time = false;
  std::size_t e_reps = 30, e_warmup = 3;
  auto* ev = app.add_subcommand("eval", "metrics and timing for a checkpoint");
  ev->add_option("--model", e_model, "input .fids checkpoint");
  ev->add_option("--data", cfg.data_path, "evaluation CSV");
  ev->add_option("--tokenizer", e_tokenizer, "tokenizer used at training time");
  ev->add_flag("--time", e_time, "run the inference timing harness");
  ev->add_option("--reps", e_reps, "timing repetitions");
  ev->add_option("--warmup", e_warmup, "timing warmup runs");
  add_common(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
    if (tok->parsed()) return cmd_tokenizer(cfg, tok_out);
    if (train->parsed())
      return cmd_train(cfg, train_tokenizer.empty()
                                ? std::nullopt
                                : std::optional<std::string>(train_tokenizer));
    if (fed->parsed()) {
      cfg.iid = fed_iid || cfg.iid;
      return cmd_fed(cfg, fed_tokenizer.empty() ? std::nullopt
                                                : std::optional<std::string>(fed_tokenizer));
    }
    if (quant->parsed()) return cmd_quantize(q_model, q_out, q_policy, q_tensors, cfg, q_tokenizer);
    if (ev->parsed()) return cmd_eval(e_model, cfg, e_tokenizer, e_time, e_reps, e_warmup);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fids::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fids::TokenizerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
