#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvclust/config.hpp"
#include "mvclust/dataset.hpp"
#include "mvclust/losses.hpp"
#include "mvclust/metrics.hpp"
#include "mvclust/network.hpp"

namespace mvclust {

/// Adam with the standard defaults (beta1 0.9, beta2 0.999, eps 1e-8).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Matrix*> params, double learning_rate);
  void step(const std::vector<Matrix>& grads);
  std::size_t param_count() const { return params_.size(); }

 private:
  std::vector<Matrix*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double lr_;
  long t_ = 0;
};

struct TrainLogRecord {
  int epoch = 0;
  std::string stage;  // "pretrain" | "finetune"
  LossBreakdown losses;
  std::optional<MetricsReport> metrics;
  double wall_time_s = 0.0;
};

/// One JSON object per line.
std::string log_record_to_json(const TrainLogRecord& record);

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRecord> log;
};

/// Stage one: reconstruction plus the hierarchical contrastive objectives
/// (student, teacher, mutual-information), summed unweighted, one Adam step
/// per batch on every trainable tensor. Deterministic per (dataset, config).
TrainResult pretrain(const MultiViewDataset& dataset, const TrainConfig& config,
                     std::ostream* log_stream = nullptr);
TrainResult pretrain(const MultiViewDataset& dataset, ModelParams params,
                     const TrainConfig& config, std::ostream* log_stream = nullptr);

/// Stage two: refresh pseudo-label state (teacher features -> K-means ->
/// per-view labels -> Hungarian alignment -> dark knowledge) on the
/// configured cadence, then distill into the student by KL steps; the
/// teacher follows the student by EMA after every step. Encoders stay
/// frozen unless configured otherwise.
TrainResult finetune(const MultiViewDataset& dataset, ModelParams params,
                     const TrainConfig& config, std::ostream* log_stream = nullptr);

struct InferenceResult {
  std::vector<int> labels;
  Matrix probs;  // N x k, mean of per-view student probabilities
};

InferenceResult infer_clusters(const MultiViewDataset& dataset, const ModelParams& params);

}  // namespace mvclust
