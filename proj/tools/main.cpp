// mvclust: multi-view clustering pipeline driver.
//
// Subcommands: synth, pretrain, finetune, evaluate, infer, run-all. Config
// precedence is defaults < --config file < explicit flags; the effective
// configuration is echoed into <out>/run_manifest.json.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mvclust/config.hpp"
#include "mvclust/dataset.hpp"
#include "mvclust/metrics.hpp"
#include "mvclust/network.hpp"
#include "mvclust/trainer.hpp"

namespace fs = std::filesystem;
using namespace mvclust;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string data_path;
  std::string out_path = ".";
  // Mirrors of the TrainConfig fields exposed as flags.
  TrainConfig flags;
};

struct FlagBindings {
  CLI::Option* seed = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* pretrain_epochs = nullptr;
  CLI::Option* finetune_epochs = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* tau_s = nullptr;
  CLI::Option* tau_t = nullptr;
  CLI::Option* tau_d = nullptr;
  CLI::Option* mu = nullptr;
  CLI::Option* latent_dim = nullptr;
  CLI::Option* head_dim = nullptr;
  CLI::Option* u_mode = nullptr;
  CLI::Option* dark_mode = nullptr;
};

std::string u_mode_flag, dark_mode_flag;

FlagBindings add_train_flags(CLI::App* cmd, CommonArgs& args) {
  FlagBindings b;
  cmd->add_option("--config", args.config_path, "Flat key=value config file");
  b.seed = cmd->add_option("--seed", args.flags.seed, "Master seed; all sub-streams derive from it")
               ->capture_default_str();
  b.batch_size = cmd->add_option("--batch-size", args.flags.batch_size, "Mini-batch size")
                     ->capture_default_str();
  b.pretrain_epochs =
      cmd->add_option("--pretrain-epochs", args.flags.pretrain_epochs, "Pretraining epochs")
          ->capture_default_str();
  b.finetune_epochs =
      cmd->add_option("--finetune-epochs", args.flags.finetune_epochs, "Fine-tuning epochs")
          ->capture_default_str();
  b.lr = cmd->add_option("--lr", args.flags.learning_rate, "Adam learning rate")
             ->capture_default_str();
  b.tau_s = cmd->add_option("--tau-s", args.flags.tau_s, "Student contrastive temperature")
                ->capture_default_str();
  b.tau_t = cmd->add_option("--tau-t", args.flags.tau_t, "Teacher contrastive temperature")
                ->capture_default_str();
  b.tau_d = cmd->add_option("--tau-d", args.flags.tau_d, "Distillation smoothing factor")
                ->capture_default_str();
  b.mu = cmd->add_option("--mu", args.flags.momentum_mu, "Teacher EMA momentum")
             ->capture_default_str();
  b.latent_dim = cmd->add_option("--latent-dim", args.flags.latent_dim, "Autoencoder latent width")
                     ->capture_default_str();
  b.head_dim = cmd->add_option("--head-dim", args.flags.head_dim, "Projection head output width")
                   ->capture_default_str();
  u_mode_flag = u_mode_name(args.flags.u_mode);
  dark_mode_flag = dark_mode_name(args.flags.dark_mode);
  b.u_mode = cmd->add_option("--u-mode", u_mode_flag, "Smoothing distribution: uniform|gaussian")
                 ->capture_default_str();
  b.dark_mode = cmd->add_option("--dark-mode", dark_mode_flag, "Dark-knowledge mode: soft|onehot")
                    ->capture_default_str();
  return b;
}

/// defaults < config file < explicit flags.
TrainConfig resolve_config(const CommonArgs& args, const FlagBindings& b,
                           std::optional<TrainConfig> base = std::nullopt) {
  TrainConfig cfg = base.value_or(TrainConfig{});
  if (!args.config_path.empty()) {
    apply_config_file(cfg, args.config_path);
  }
  if (b.seed && b.seed->count()) cfg.seed = args.flags.seed;
  if (b.batch_size && b.batch_size->count()) cfg.batch_size = args.flags.batch_size;
  if (b.pretrain_epochs && b.pretrain_epochs->count()) cfg.pretrain_epochs = args.flags.pretrain_epochs;
  if (b.finetune_epochs && b.finetune_epochs->count()) cfg.finetune_epochs = args.flags.finetune_epochs;
  if (b.lr && b.lr->count()) cfg.learning_rate = args.flags.learning_rate;
  if (b.tau_s && b.tau_s->count()) cfg.tau_s = args.flags.tau_s;
  if (b.tau_t && b.tau_t->count()) cfg.tau_t = args.flags.tau_t;
  if (b.tau_d && b.tau_d->count()) cfg.tau_d = args.flags.tau_d;
  if (b.mu && b.mu->count()) cfg.momentum_mu = args.flags.momentum_mu;
  if (b.latent_dim && b.latent_dim->count()) cfg.latent_dim = args.flags.latent_dim;
  if (b.head_dim && b.head_dim->count()) cfg.head_dim = args.flags.head_dim;
  if (b.u_mode && b.u_mode->count()) cfg.u_mode = parse_u_mode(u_mode_flag);
  if (b.dark_mode && b.dark_mode->count()) cfg.dark_mode = parse_dark_mode(dark_mode_flag);
  cfg.validate();
  return cfg;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const TrainConfig& cfg, const std::string& data,
                    const std::string& ckpt_in, const std::string& ckpt_out) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["dataset_path"] = data;
  j["checkpoint_in"] = ckpt_in;
  j["checkpoint_out"] = ckpt_out;
  nlohmann::ordered_json cfg_obj;
  std::istringstream kv(to_kv_text(cfg));
  std::string line;
  while (std::getline(kv, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) cfg_obj[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfg_obj;
  std::ofstream out(out_dir / "run_manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

MultiViewDataset load_for_model(const std::string& path, const TrainConfig& cfg) {
  MultiViewDataset ds = load_dataset(path);
  if (cfg.normalize_input) ds = normalize_minmax(ds);
  return ds;
}

void write_labels_csv(const std::vector<int>& labels, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  for (const int l : labels) out << l << '\n';
}

void write_probs_csv(const Matrix& probs, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  char buf[40];
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", probs(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

Checkpoint make_checkpoint(const TrainConfig& cfg, const MultiViewDataset& ds,
                           ModelParams params, Stage stage) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.view_dims = ds.view_dims();
  ckpt.num_clusters = ds.num_clusters;
  ckpt.params = std::move(params);
  ckpt.stage = stage;
  return ckpt;
}

MetricsReport run_evaluate(const MultiViewDataset& ds, const ModelParams& params,
                           const fs::path& out_dir) {
  if (!ds.labels) {
    throw ConfigError("evaluate requires ground-truth labels (dataset has none)");
  }
  const InferenceResult inf = infer_clusters(ds, params);
  const MetricsReport report = evaluate_clustering(inf.labels, *ds.labels, ds.num_clusters);
  std::ofstream out(out_dir / "metrics.json", std::ios::binary);
  out << metrics_to_json(report) << '\n';
  std::cout << metrics_to_json(report) << '\n';
  return report;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-view clustering via hierarchical contrastive learning and "
               "teacher-student self-distillation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view dataset");
  SyntheticSpec spec;
  std::string synth_out;
  std::string view_dims_str = "10,12";
  synth->add_option("--k", spec.k, "Number of clusters")->capture_default_str();
  synth->add_option("--n-per-cluster", spec.n_per_cluster, "Samples per cluster")
      ->capture_default_str();
  synth->add_option("--view-dims", view_dims_str, "Comma-separated view widths")
      ->capture_default_str();
  synth->add_option("--separation", spec.cluster_separation,
                    "Min centroid distance in within-cluster stddevs")
      ->capture_default_str();
  synth->add_option("--noise", spec.noise_scale, "Per-view additive noise scale")
      ->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output dataset directory")->required();

  // Training-style commands share the flag set.
  CommonArgs pre_args, fin_args, eval_args, infer_args, all_args;
  auto* pre = app.add_subcommand("pretrain", "Stage one: reconstruction + contrastive losses");
  pre->add_option("--data", pre_args.data_path, "Dataset directory")->required();
  pre->add_option("--out", pre_args.out_path, "Output directory")->required();
  const FlagBindings pre_flags = add_train_flags(pre, pre_args);

  auto* fin = app.add_subcommand("finetune", "Stage two: self-distillation from dark knowledge");
  std::string fin_ckpt;
  fin->add_option("--data", fin_args.data_path, "Dataset directory")->required();
  fin->add_option("--checkpoint", fin_ckpt, "Pretrained checkpoint")->required();
  fin->add_option("--out", fin_args.out_path, "Output directory")->required();
  const FlagBindings fin_flags = add_train_flags(fin, fin_args);

  auto* eval = app.add_subcommand("evaluate", "Compute ACC/NMI/PUR against labels");
  std::string eval_ckpt;
  eval->add_option("--data", eval_args.data_path, "Dataset directory")->required();
  eval->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
  eval->add_option("--out", eval_args.out_path, "Output directory")->required();

  auto* inf = app.add_subcommand("infer", "Write cluster labels and probabilities");
  std::string infer_ckpt;
  inf->add_option("--data", infer_args.data_path, "Dataset directory")->required();
  inf->add_option("--checkpoint", infer_ckpt, "Trained checkpoint")->required();
  inf->add_option("--out", infer_args.out_path, "Output directory")->required();

  auto* all = app.add_subcommand("run-all", "synth-or-load -> pretrain -> finetune -> evaluate");
  SyntheticSpec all_spec;
  std::string all_view_dims = "10,12";
  all->add_option("--data", all_args.data_path, "Existing dataset directory (skips synthesis)");
  all->add_option("--out", all_args.out_path, "Output directory")->required();
  all->add_option("--k", all_spec.k, "Synthetic clusters")->capture_default_str();
  all->add_option("--n-per-cluster", all_spec.n_per_cluster, "Synthetic samples per cluster")
      ->capture_default_str();
  all->add_option("--view-dims", all_view_dims, "Synthetic view widths")->capture_default_str();
  all->add_option("--separation", all_spec.cluster_separation, "Synthetic cluster separation")
      ->capture_default_str();
  all->add_option("--noise", all_spec.noise_scale, "Synthetic noise scale")->capture_default_str();
  const FlagBindings all_flags = add_train_flags(all, all_args);

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    spec.view_dims.clear();
    std::istringstream ss(view_dims_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) spec.view_dims.push_back(std::stoi(tok));
    const MultiViewDataset ds = synth_generate(spec);
    save_dataset(ds, synth_out);
    std::cout << "wrote " << ds.num_views() << "-view dataset (" << ds.num_samples()
              << " samples, k=" << ds.num_clusters << ") to " << synth_out << '\n';
    return 0;
  }

  if (pre->parsed()) {
    const TrainConfig cfg = resolve_config(pre_args, pre_flags);
    fs::create_directories(pre_args.out_path);
    const MultiViewDataset ds = load_for_model(pre_args.data_path, cfg);
    std::ofstream log(fs::path(pre_args.out_path) / "pretrain_log.jsonl", std::ios::binary);
    TrainResult result = pretrain(ds, cfg, &log);
    const fs::path ckpt_path = fs::path(pre_args.out_path) / "pretrained.ckpt";
    save_checkpoint(make_checkpoint(cfg, ds, std::move(result.params), Stage::pretrained),
                    ckpt_path);
    write_manifest(pre_args.out_path, "pretrain", cfg, pre_args.data_path, "",
                   ckpt_path.string());
    std::cout << "pretrained checkpoint: " << ckpt_path.string() << '\n';
    return 0;
  }

  if (fin->parsed()) {
    Checkpoint ckpt = load_checkpoint(fin_ckpt);
    if (ckpt.stage != Stage::pretrained) {
      throw StageError("finetune expects a stage=pretrained checkpoint");
    }
    const TrainConfig cfg = resolve_config(fin_args, fin_flags, ckpt.config);
    if (cfg.latent_dim != ckpt.config.latent_dim || cfg.head_dim != ckpt.config.head_dim ||
        cfg.encoder_hidden != ckpt.config.encoder_hidden ||
        cfg.head_hidden != ckpt.config.head_hidden) {
      throw ConfigError("architecture widths cannot change after pretraining");
    }
    fs::create_directories(fin_args.out_path);
    const MultiViewDataset ds = load_for_model(fin_args.data_path, cfg);
    std::ofstream log(fs::path(fin_args.out_path) / "finetune_log.jsonl", std::ios::binary);
    TrainResult result = finetune(ds, std::move(ckpt.params), cfg, &log);
    const fs::path ckpt_path = fs::path(fin_args.out_path) / "finetuned.ckpt";
    save_checkpoint(make_checkpoint(cfg, ds, std::move(result.params), Stage::finetuned),
                    ckpt_path);
    write_manifest(fin_args.out_path, "finetune", cfg, fin_args.data_path, fin_ckpt,
                   ckpt_path.string());
    std::cout << "finetuned checkpoint: " << ckpt_path.string() << '\n';
    return 0;
  }

  if (eval->parsed()) {
    const Checkpoint ckpt = load_checkpoint(eval_ckpt);
    fs::create_directories(eval_args.out_path);
    const MultiViewDataset ds = load_for_model(eval_args.data_path, ckpt.config);
    run_evaluate(ds, ckpt.params, eval_args.out_path);
    write_manifest(eval_args.out_path, "evaluate", ckpt.config, eval_args.data_path,
                   eval_ckpt, "");
    return 0;
  }

  if (inf->parsed()) {
    const Checkpoint ckpt = load_checkpoint(infer_ckpt);
    fs::create_directories(infer_args.out_path);
    const MultiViewDataset ds = load_for_model(infer_args.data_path, ckpt.config);
    const InferenceResult result = infer_clusters(ds, ckpt.params);
    write_labels_csv(result.labels, fs::path(infer_args.out_path) / "labels.csv");
    write_probs_csv(result.probs, fs::path(infer_args.out_path) / "probs.csv");
    write_manifest(infer_args.out_path, "infer", ckpt.config, infer_args.data_path,
                   infer_ckpt, "");
    std::cout << "wrote labels.csv and probs.csv to " << infer_args.out_path << '\n';
    return 0;
  }

  if (all->parsed()) {
    const TrainConfig cfg = resolve_config(all_args, all_flags);
    const fs::path out_dir = all_args.out_path;
    fs::create_directories(out_dir);

    std::string data_path = all_args.data_path;
    if (data_path.empty()) {
      all_spec.seed = cfg.seed;
      all_spec.view_dims.clear();
      std::istringstream ss(all_view_dims);
      std::string tok;
      while (std::getline(ss, tok, ',')) all_spec.view_dims.push_back(std::stoi(tok));
      const MultiViewDataset raw = synth_generate(all_spec);
      data_path = (out_dir / "dataset").string();
      save_dataset(raw, data_path);
    }
    const MultiViewDataset ds = load_for_model(data_path, cfg);

    std::ofstream pre_log(out_dir / "pretrain_log.jsonl", std::ios::binary);
    TrainResult pre_result = pretrain(ds, cfg, &pre_log);
    const fs::path pre_ckpt = out_dir / "pretrained.ckpt";
    save_checkpoint(make_checkpoint(cfg, ds, pre_result.params, Stage::pretrained), pre_ckpt);

    std::ofstream fin_log(out_dir / "finetune_log.jsonl", std::ios::binary);
    TrainResult fin_result = finetune(ds, std::move(pre_result.params), cfg, &fin_log);
    const fs::path fin_ckpt2 = out_dir / "finetuned.ckpt";
    save_checkpoint(make_checkpoint(cfg, ds, fin_result.params, Stage::finetuned), fin_ckpt2);

    const InferenceResult inference = infer_clusters(ds, fin_result.params);
    write_labels_csv(inference.labels, out_dir / "labels.csv");
    write_probs_csv(inference.probs, out_dir / "probs.csv");
    run_evaluate(ds, fin_result.params, out_dir);
    write_manifest(out_dir, "run-all", cfg, data_path, "", fin_ckpt2.string());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
