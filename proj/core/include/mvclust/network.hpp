#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvclust/autodiff.hpp"
#include "mvclust/common.hpp"
#include "mvclust/config.hpp"

namespace mvclust {

/// Widths of a fully connected stack, input first. ReLU between layers;
/// the final layer is linear unless final_activation says softmax.
struct MLPSpec {
  enum class Final { none, softmax };
  std::vector<int> layer_widths;
  Final final_activation = Final::none;

  void validate() const;
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
};

/// Parameters of one dense stack: weights[i] is (in x out), biases[i] is
/// (1 x out), in declaration order.
struct DenseStack {
  MLPSpec spec;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  std::size_t layer_count() const { return weights.size(); }
};

struct AutoencoderParams {
  DenseStack encoder;  // D_v -> ... -> latent_dim
  DenseStack decoder;  // latent_dim -> ... -> D_v
  int view_index = 0;
};

/// Shared heads: student projector, predictor (softmax over k clusters) and
/// the teacher projector it is structurally congruent with.
struct HeadParams {
  DenseStack student;    // latent_dim -> 512 -> head_dim
  DenseStack predictor;  // head_dim -> k, softmax
  DenseStack teacher;    // same shape as student
};

struct ModelParams {
  std::vector<AutoencoderParams> autoencoders;
  HeadParams heads;

  /// All tensors in declaration order (autoencoders by view, encoder then
  /// decoder, then student, predictor, teacher; weight before bias per layer).
  std::vector<Matrix*> all_tensors();
  std::vector<const Matrix*> all_tensors() const;
  /// Student-side tensors (w_s + w_p) updated during fine-tuning.
  std::vector<Matrix*> student_head_tensors();
  std::vector<Matrix*> encoder_tensors();
};

enum class Stage { pretrained, finetuned };

struct Checkpoint {
  static constexpr int kVersion = 1;
  int version = kVersion;
  TrainConfig config;
  std::vector<int> view_dims;
  int num_clusters = 0;
  ModelParams params;
  Stage stage = Stage::pretrained;
  std::vector<std::uint8_t> rng_state;
};

/// Builds the default architecture: per-view encoders
/// D_v-512-1024-2048-512-latent, mirrored decoders latent-512-2048-1024-512-D_v,
/// two-linear-layer heads, predictor with a softmax output over k clusters.
/// All dense layers use fan-in-scaled uniform init; the teacher starts as its
/// own freshly initialized stack. Deterministic per seed.
ModelParams init_params(const TrainConfig& config, const std::vector<int>& view_dims,
                        int num_clusters, std::uint64_t seed);

Matrix encode(const AutoencoderParams& params, const Matrix& x_batch);
Matrix decode(const AutoencoderParams& params, const Matrix& z_batch);
Matrix student_probs(const HeadParams& heads, const Matrix& z_batch);
Matrix teacher_features(const HeadParams& heads, const Matrix& z_batch);

/// theta <- mu*theta + (1-mu)*xi, elementwise over congruent stacks.
void ema_update(DenseStack& theta, const DenseStack& xi, double mu);

/// Taped forward through a dense stack (shares the exact arithmetic of the
/// plain forwards, so checkpoint round-trips stay bit-exact either way).
ad::Value forward_stack(ad::Tape& tape, const DenseStack& stack, ad::Value input,
                        const std::vector<ad::Value>* taped_params = nullptr);

/// Registers a stack's tensors on the tape as differentiable leaves, in
/// declaration order.
std::vector<ad::Value> register_stack(ad::Tape& tape, const DenseStack& stack);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mvclust
