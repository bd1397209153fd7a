#include "mvclust/trainer.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "mvclust/pseudolabel.hpp"
#include "mvclust/rng.hpp"

namespace mvclust {

namespace {

Matrix take_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

void check_component(double value, const char* component, const char* stage, int epoch,
                     int batch) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(stage) + ": loss component '" + component +
                       "' is non-finite at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
  }
}

std::optional<MetricsReport> epoch_metrics(const MultiViewDataset& dataset,
                                           const ModelParams& params) {
  if (!dataset.labels) return std::nullopt;
  const InferenceResult inf = infer_clusters(dataset, params);
  return evaluate_clustering(inf.labels, *dataset.labels, dataset.num_clusters);
}

void emit(std::vector<TrainLogRecord>& log, std::ostream* stream, TrainLogRecord record) {
  if (stream) *stream << log_record_to_json(record) << '\n' << std::flush;
  log.push_back(std::move(record));
}

Vector make_u_vector(int k, const TrainConfig& config) {
  if (config.u_mode == UMode::uniform) {
    return Vector::Constant(k, 1.0 / static_cast<double>(k));
  }
  // One softmax-normalized standard-normal draw per run.
  Rng rng(derive_seed(config.seed, "u"));
  Vector u(k);
  for (int i = 0; i < k; ++i) u(i) = rng.normal();
  const double mx = u.maxCoeff();
  u = (u.array() - mx).exp();
  u /= u.sum();
  return u;
}

}  // namespace

AdamOptimizer::AdamOptimizer(std::vector<Matrix*> params, double learning_rate)
    : params_(std::move(params)), lr_(learning_rate) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void AdamOptimizer::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("AdamOptimizer: gradient count mismatch");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params_[i]->rows() || g.cols() != params_[i]->cols()) {
      throw ShapeError("AdamOptimizer: gradient shape mismatch at tensor " + std::to_string(i));
    }
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseProduct(g);
    *params_[i] -= (lr_ / bc1) * m_[i].cwiseQuotient(
                       ((v_[i] / bc2).cwiseSqrt().array() + eps).matrix());
  }
}

std::string log_record_to_json(const TrainLogRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["stage"] = r.stage;
  j["rec"] = r.losses.rec;
  j["stu"] = r.losses.stu;
  j["tea"] = r.losses.tea;
  j["iic"] = r.losses.iic;
  j["self_distill"] = r.losses.self_distill;
  j["total"] = r.losses.total;
  if (r.metrics) {
    j["acc"] = r.metrics->acc;
    j["nmi"] = r.metrics->nmi;
    j["pur"] = r.metrics->pur;
  }
  j["wall_time_s"] = r.wall_time_s;
  return j.dump();
}

TrainResult pretrain(const MultiViewDataset& dataset, const TrainConfig& config,
                     std::ostream* log_stream) {
  return pretrain(dataset,
                  init_params(config, dataset.view_dims(), dataset.num_clusters, config.seed),
                  config, log_stream);
}

TrainResult pretrain(const MultiViewDataset& dataset, ModelParams params,
                     const TrainConfig& config, std::ostream* log_stream) {
  dataset.validate();
  config.validate();
  const int num_views = dataset.num_views();

  TrainResult result;
  AdamOptimizer adam(params.all_tensors(), config.learning_rate);
  const BatchPlan plan{config.batch_size, derive_seed(config.seed, "shuffle-pretrain"), false};
  const ContrastiveOptions copts{true, config.include_self_negatives};

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    LossBreakdown epoch_losses;
    int batch_count = 0;

    for (const auto& batch : batch_iter(dataset, plan, epoch)) {
      ad::Tape tape;

      // Leaves are registered in all_tensors() order so gradients can be
      // collected positionally after backward().
      std::vector<std::vector<ad::Value>> enc_leaves(num_views), dec_leaves(num_views);
      for (int v = 0; v < num_views; ++v) {
        enc_leaves[v] = register_stack(tape, params.autoencoders[v].encoder);
        dec_leaves[v] = register_stack(tape, params.autoencoders[v].decoder);
      }
      const auto stu_leaves = register_stack(tape, params.heads.student);
      const auto pred_leaves = register_stack(tape, params.heads.predictor);
      const auto tea_leaves = register_stack(tape, params.heads.teacher);

      std::vector<ad::Value> xs, zs, xhats, ys, ts;
      for (int v = 0; v < num_views; ++v) {
        ad::Value x = tape.constant(take_rows(dataset.views[v].data, batch));
        ad::Value z = forward_stack(tape, params.autoencoders[v].encoder, x, &enc_leaves[v]);
        xs.push_back(x);
        zs.push_back(z);
        xhats.push_back(forward_stack(tape, params.autoencoders[v].decoder, z, &dec_leaves[v]));
        ad::Value s = forward_stack(tape, params.heads.student, z, &stu_leaves);
        ys.push_back(forward_stack(tape, params.heads.predictor, s, &pred_leaves));
        ts.push_back(forward_stack(tape, params.heads.teacher, z, &tea_leaves));
      }

      ad::Value l_rec = graph::reconstruction_loss(xs, xhats, Reduction::batch_mean);
      ad::Value l_stu = graph::student_contrastive_loss(ys, config.tau_s, copts);
      ad::Value l_tea = graph::teacher_contrastive_loss(ts, config.tau_t,
                                                        config.include_self_negatives);
      ad::Value l_iic = graph::iic_mi_loss(config.iic_target == IicTarget::latent ? zs : ys);

      check_component(l_rec.scalar(), "rec", "pretrain", epoch, batch_count);
      check_component(l_stu.scalar(), "stu", "pretrain", epoch, batch_count);
      check_component(l_tea.scalar(), "tea", "pretrain", epoch, batch_count);
      check_component(l_iic.scalar(), "iic", "pretrain", epoch, batch_count);

      ad::Value total = ad::add(ad::add(l_rec, l_stu), ad::add(l_tea, l_iic));
      tape.backward(total);

      std::vector<Matrix> grads;
      grads.reserve(adam.param_count());
      for (int v = 0; v < num_views; ++v) {
        for (const auto& leaf : enc_leaves[v]) grads.push_back(leaf.grad());
        for (const auto& leaf : dec_leaves[v]) grads.push_back(leaf.grad());
      }
      for (const auto& leaf : stu_leaves) grads.push_back(leaf.grad());
      for (const auto& leaf : pred_leaves) grads.push_back(leaf.grad());
      for (const auto& leaf : tea_leaves) grads.push_back(leaf.grad());
      adam.step(grads);

      epoch_losses.rec += l_rec.scalar();
      epoch_losses.stu += l_stu.scalar();
      epoch_losses.tea += l_tea.scalar();
      epoch_losses.iic += l_iic.scalar();
      epoch_losses.total += total.scalar();
      ++batch_count;
    }

    if (batch_count > 0) {
      epoch_losses.rec /= batch_count;
      epoch_losses.stu /= batch_count;
      epoch_losses.tea /= batch_count;
      epoch_losses.iic /= batch_count;
      epoch_losses.total /= batch_count;
    }

    TrainLogRecord record;
    record.epoch = epoch;
    record.stage = "pretrain";
    record.losses = epoch_losses;
    record.metrics = epoch_metrics(dataset, params);
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(result.log, log_stream, std::move(record));
  }

  result.params = std::move(params);
  return result;
}

TrainResult finetune(const MultiViewDataset& dataset, ModelParams params,
                     const TrainConfig& config, std::ostream* log_stream) {
  dataset.validate();
  config.validate();
  const int num_views = dataset.num_views();
  const int k = dataset.num_clusters;
  const bool update_encoders = config.finetune_update_encoders;

  TrainResult result;
  std::vector<Matrix*> trainable = params.student_head_tensors();
  if (update_encoders) {
    for (Matrix* t : params.encoder_tensors()) trainable.push_back(t);
  }
  AdamOptimizer adam(trainable, config.learning_rate);
  const BatchPlan plan{config.batch_size, derive_seed(config.seed, "shuffle-finetune"), false};
  const Vector u = make_u_vector(k, config);

  // With frozen encoders the latent codes never change; compute them once.
  std::vector<Matrix> z_full(static_cast<std::size_t>(num_views));
  auto refresh_latents = [&] {
    for (int v = 0; v < num_views; ++v) {
      z_full[static_cast<std::size_t>(v)] = encode(params.autoencoders[v], dataset.views[v].data);
    }
  };
  refresh_latents();

  std::vector<Matrix> dark_targets;
  for (int epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    if (epoch % config.kmeans_refresh_epochs == 0) {
      if (update_encoders && epoch > 0) refresh_latents();
      std::vector<Matrix> t_views;
      std::vector<std::vector<int>> student_labels;
      for (int v = 0; v < num_views; ++v) {
        t_views.push_back(teacher_features(params.heads, z_full[static_cast<std::size_t>(v)]));
        const Matrix y = student_probs(params.heads, z_full[static_cast<std::size_t>(v)]);
        std::vector<int> labels(static_cast<std::size_t>(y.rows()));
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
          Eigen::Index arg = 0;
          y.row(i).maxCoeff(&arg);
          labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
        }
        student_labels.push_back(std::move(labels));
      }
      const ClusterState state = build_cluster_state(
          t_views, student_labels, k, derive_seed(config.seed, "kmeans", epoch),
          config.dark_mode, config.effective_dark_temp(), config.kmeans_max_iter,
          config.kmeans_tol, config.normalize_teacher_features);
      dark_targets = state.dark_targets;
    }

    LossBreakdown epoch_losses;
    int batch_count = 0;
    for (const auto& batch : batch_iter(dataset, plan, epoch)) {
      ad::Tape tape;
      std::vector<std::vector<ad::Value>> enc_leaves(num_views);
      if (update_encoders) {
        for (int v = 0; v < num_views; ++v) {
          enc_leaves[v] = register_stack(tape, params.autoencoders[v].encoder);
        }
      }
      const auto stu_leaves = register_stack(tape, params.heads.student);
      const auto pred_leaves = register_stack(tape, params.heads.predictor);

      std::vector<ad::Value> ys;
      std::vector<Matrix> dark_batch;
      for (int v = 0; v < num_views; ++v) {
        ad::Value z;
        if (update_encoders) {
          ad::Value x = tape.constant(take_rows(dataset.views[v].data, batch));
          z = forward_stack(tape, params.autoencoders[v].encoder, x, &enc_leaves[v]);
        } else {
          z = tape.constant(take_rows(z_full[static_cast<std::size_t>(v)], batch));
        }
        ad::Value s = forward_stack(tape, params.heads.student, z, &stu_leaves);
        ys.push_back(forward_stack(tape, params.heads.predictor, s, &pred_leaves));
        dark_batch.push_back(take_rows(dark_targets[static_cast<std::size_t>(v)], batch));
      }

      ad::Value l_self = graph::self_distillation_loss(tape, dark_batch, ys, config.tau_d, u,
                                                       config.distill_literal_sign);
      check_component(l_self.scalar(), "self_distill", "finetune", epoch, batch_count);
      tape.backward(l_self);

      std::vector<Matrix> grads;
      grads.reserve(adam.param_count());
      for (const auto& leaf : stu_leaves) grads.push_back(leaf.grad());
      for (const auto& leaf : pred_leaves) grads.push_back(leaf.grad());
      if (update_encoders) {
        for (int v = 0; v < num_views; ++v) {
          for (const auto& leaf : enc_leaves[v]) grads.push_back(leaf.grad());
        }
      }
      adam.step(grads);

      // Teacher trails the student by momentum after every step; it receives
      // no gradient in this stage.
      ema_update(params.heads.teacher, params.heads.student, config.momentum_mu);

      epoch_losses.self_distill += l_self.scalar();
      epoch_losses.total += l_self.scalar();
      ++batch_count;
    }

    if (batch_count > 0) {
      epoch_losses.self_distill /= batch_count;
      epoch_losses.total /= batch_count;
    }

    TrainLogRecord record;
    record.epoch = epoch;
    record.stage = "finetune";
    record.losses = epoch_losses;
    record.metrics = epoch_metrics(dataset, params);
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(result.log, log_stream, std::move(record));
  }

  result.params = std::move(params);
  return result;
}

InferenceResult infer_clusters(const MultiViewDataset& dataset, const ModelParams& params) {
  dataset.validate();
  const int num_views = dataset.num_views();
  Matrix mean_probs;
  for (int v = 0; v < num_views; ++v) {
    const Matrix z = encode(params.autoencoders[v], dataset.views[v].data);
    const Matrix y = student_probs(params.heads, z);
    if (v == 0) {
      mean_probs = y;
    } else {
      mean_probs += y;
    }
  }
  mean_probs /= static_cast<double>(num_views);

  InferenceResult result;
  result.labels.resize(static_cast<std::size_t>(mean_probs.rows()));
  for (Eigen::Index i = 0; i < mean_probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < mean_probs.cols(); ++j) {
      if (mean_probs(i, j) > mean_probs(i, best)) best = static_cast<int>(j);
    }
    result.labels[static_cast<std::size_t>(i)] = best;
  }
  result.probs = std::move(mean_probs);
  return result;
}

}  // namespace mvclust
