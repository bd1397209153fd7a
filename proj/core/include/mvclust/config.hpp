#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvclust/common.hpp"

namespace mvclust {

enum class UMode { uniform, gaussian };
enum class DarkMode { soft, onehot };
enum class IicTarget { latent, predictor };

/// Every knob of the two-stage pipeline. Defaults: batch 128, epochs 150/50,
/// lr 1e-4, temperatures 0.5/1.0/0.1, momentum 0.996.
struct TrainConfig {
  int batch_size = 128;
  int pretrain_epochs = 150;
  int finetune_epochs = 50;
  double learning_rate = 1e-4;
  double tau_s = 0.5;   // student contrastive temperature
  double tau_t = 1.0;   // teacher contrastive temperature
  double tau_d = 0.1;   // distillation smoothing factor
  double momentum_mu = 0.996;
  int latent_dim = 512;
  int head_dim = 256;
  // Encoder hidden widths; decoders mirror them in reverse.
  std::vector<int> encoder_hidden = {512, 1024, 2048, 512};
  int head_hidden = 512;
  std::uint64_t seed = 0;
  UMode u_mode = UMode::uniform;
  DarkMode dark_mode = DarkMode::soft;
  int kmeans_refresh_epochs = 1;

  // Secondary knobs (config-file keys; not surfaced as dedicated CLI flags).
  bool include_self_negatives = false;  // literal same-view denominator (keeps m=n)
  IicTarget iic_target = IicTarget::latent;
  bool finetune_update_encoders = false;
  bool distill_literal_sign = false;  // negated-KL objective, for comparison runs
  bool normalize_input = true;
  // Cluster unit-normalized teacher features (they are trained on cosine
  // similarity, so direction carries the semantics).
  bool normalize_teacher_features = true;
  double dark_temp = -1.0;  // <0 means "follow tau_t"
  int kmeans_max_iter = 100;
  double kmeans_tol = 1e-8;

  double effective_dark_temp() const { return dark_temp > 0 ? dark_temp : tau_t; }
  void validate() const;
};

std::string u_mode_name(UMode m);
std::string dark_mode_name(DarkMode m);
UMode parse_u_mode(const std::string& s);
DarkMode parse_dark_mode(const std::string& s);

/// Flat key=value form (one pair per line, keys mirror the CLI flag names).
/// Used for config files, the checkpoint snapshot, and the run manifest.
std::string to_kv_text(const TrainConfig& cfg);
TrainConfig from_kv_text(const std::string& text);
void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Applies a config file's pairs over an existing config (absent keys keep
/// their current values).
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);
TrainConfig load_config_file(const std::filesystem::path& path);

}  // namespace mvclust
