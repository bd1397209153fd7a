#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mvclust/trainer.hpp"

using namespace mvclust;

namespace {

TrainConfig small_config(std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.latent_dim = 12;
  cfg.head_dim = 6;
  cfg.encoder_hidden = {16};
  cfg.head_hidden = 12;
  cfg.batch_size = 32;
  cfg.pretrain_epochs = 3;
  cfg.finetune_epochs = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  return cfg;
}

MultiViewDataset small_blobs(std::uint64_t seed = 0, int n_per = 30) {
  SyntheticSpec spec;
  spec.n_per_cluster = n_per;
  spec.k = 3;
  spec.view_dims = {6, 8};
  spec.cluster_separation = 6.0;
  spec.noise_scale = 0.1;
  spec.seed = seed;
  return normalize_minmax(synth_generate(spec));
}

bool params_identical(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.all_tensors();
  const auto tb = b.all_tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("trainer: zero epochs leave parameters at their initialization") {
  const MultiViewDataset ds = small_blobs();
  TrainConfig cfg = small_config();
  cfg.pretrain_epochs = 0;
  const ModelParams init = init_params(cfg, ds.view_dims(), ds.num_clusters, cfg.seed);
  const TrainResult result = pretrain(ds, init, cfg);
  CHECK(params_identical(result.params, init));
  CHECK(result.log.empty());
}

TEST_CASE("trainer: pretraining is bit-deterministic per seed") {
  const MultiViewDataset ds = small_blobs();
  const TrainConfig cfg = small_config(7);
  const TrainResult a = pretrain(ds, cfg);
  const TrainResult b = pretrain(ds, cfg);
  CHECK(a.log.back().losses.total == b.log.back().losses.total);  // to the last bit
  CHECK(params_identical(a.params, b.params));
}

TEST_CASE("trainer: logged total equals the sum of its components") {
  const MultiViewDataset ds = small_blobs();
  const TrainConfig cfg = small_config(3);
  TrainResult result = pretrain(ds, cfg);
  for (const auto& rec : result.log) {
    const double sum = rec.losses.rec + rec.losses.stu + rec.losses.tea + rec.losses.iic +
                       rec.losses.self_distill;
    CHECK(std::abs(rec.losses.total - sum) < 1e-9);
  }
  result = finetune(ds, std::move(result.params), cfg);
  for (const auto& rec : result.log) {
    CHECK(std::abs(rec.losses.total - rec.losses.self_distill) < 1e-9);
  }
}

TEST_CASE("trainer: loss descends on synthetic blobs (moving average)") {
  const MultiViewDataset ds = small_blobs(1, 40);
  TrainConfig cfg = small_config(1);
  cfg.pretrain_epochs = 25;
  const TrainResult result = pretrain(ds, cfg);
  auto window_mean = [&](int start) {
    double acc = 0.0;
    for (int e = start; e < start + 5; ++e) {
      acc += result.log[static_cast<std::size_t>(e)].losses.total;
    }
    return acc / 5.0;
  };
  CHECK(window_mean(20) <= window_mean(0));
}

TEST_CASE("trainer: finetune with mu=1 freezes the teacher") {
  const MultiViewDataset ds = small_blobs(2);
  TrainConfig cfg = small_config(2);
  const TrainResult pre = pretrain(ds, cfg);
  cfg.momentum_mu = 1.0;
  const DenseStack teacher_before = pre.params.heads.teacher;
  const TrainResult fin = finetune(ds, pre.params, cfg);
  for (std::size_t l = 0; l < teacher_before.layer_count(); ++l) {
    CHECK(fin.params.heads.teacher.weights[l] == teacher_before.weights[l]);
    CHECK(fin.params.heads.teacher.biases[l] == teacher_before.biases[l]);
  }
}

TEST_CASE("trainer: frozen encoders are bit-identical through finetuning") {
  const MultiViewDataset ds = small_blobs(4);
  const TrainConfig cfg = small_config(4);
  const TrainResult pre = pretrain(ds, cfg);
  std::vector<Matrix> before;
  for (const auto& ae : pre.params.autoencoders) {
    for (const auto& w : ae.encoder.weights) before.push_back(w);
    for (const auto& w : ae.decoder.weights) before.push_back(w);
  }
  const TrainResult fin = finetune(ds, pre.params, cfg);
  std::size_t idx = 0;
  for (const auto& ae : fin.params.autoencoders) {
    for (const auto& w : ae.encoder.weights) CHECK(w == before[idx++]);
    for (const auto& w : ae.decoder.weights) CHECK(w == before[idx++]);
  }
}

TEST_CASE("trainer: teacher equals the closed-form EMA of the student trajectory") {
  // One batch per epoch so optimizer steps and epochs coincide.
  const MultiViewDataset ds = small_blobs(5, 10);  // N = 30 <= batch 32
  TrainConfig cfg = small_config(5);
  cfg.finetune_epochs = 1;
  const TrainResult pre = pretrain(ds, cfg);
  const DenseStack theta0 = pre.params.heads.teacher;

  const TrainResult one = finetune(ds, pre.params, cfg);
  const DenseStack& xi1 = one.params.heads.student;

  cfg.finetune_epochs = 2;
  const TrainResult two = finetune(ds, pre.params, cfg);
  const DenseStack& xi2 = two.params.heads.student;

  // Replay the recurrence with the same arithmetic.
  DenseStack expected = theta0;
  ema_update(expected, xi1, cfg.momentum_mu);
  ema_update(expected, xi2, cfg.momentum_mu);
  for (std::size_t l = 0; l < expected.layer_count(); ++l) {
    CHECK(two.params.heads.teacher.weights[l] == expected.weights[l]);
    CHECK(two.params.heads.teacher.biases[l] == expected.biases[l]);
  }
}

TEST_CASE("trainer: distillation toward matching targets is a zero-loss fixed point") {
  // With y produced by a softmax that already equals the mixed target, the
  // loss is exactly zero and no gradient reaches the logits.
  Matrix q(4, 2);
  q << 0.3, 0.7, 0.5, 0.5, 0.9, 0.1, 0.25, 0.75;
  const Matrix logits = q.array().log().matrix();
  ad::Tape tape;
  ad::Value raw = tape.constant(logits);
  ad::Value y = ad::row_softmax(raw);
  ad::Value loss = graph::self_distillation_loss(tape, {q}, {y}, 0.0,
                                                 Vector::Constant(2, 0.5));
  CHECK(loss.scalar() == doctest::Approx(0.0));
  tape.backward(loss);
  CHECK(raw.grad().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("trainer: NaN loss aborts with the component name") {
  const MultiViewDataset ds = small_blobs(8);
  TrainConfig cfg = small_config(8);
  ModelParams params = init_params(cfg, ds.view_dims(), ds.num_clusters, cfg.seed);
  params.autoencoders[0].encoder.weights[0](0, 0) = std::nan("");
  CHECK_THROWS_WITH_AS(pretrain(ds, std::move(params), cfg), doctest::Contains("rec"),
                       NumericError);
}

TEST_CASE("trainer: log stream emits one JSON object per epoch") {
  const MultiViewDataset ds = small_blobs(9);
  TrainConfig cfg = small_config(9);
  cfg.pretrain_epochs = 2;
  std::ostringstream log;
  pretrain(ds, cfg, &log);
  int lines = 0;
  std::istringstream in(log.str());
  std::string line;
  while (std::getline(in, line)) {
    CHECK(line.front() == '{');
    CHECK(line.find("\"epoch\"") != std::string::npos);
    CHECK(line.find("\"acc\"") != std::string::npos);  // labels present
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("trainer: infer_clusters averages views and breaks ties low") {
  // Hand-built model: encoders map the single input feature to exact logits,
  // heads pass them through, so per-view probabilities are known.
  MultiViewDataset ds;
  ds.name = "handmade";
  ds.num_clusters = 2;
  ViewMatrix v0, v1;
  v0.view_index = 0;
  v0.data = Matrix::Ones(2, 1);
  v1.view_index = 1;
  v1.data = Matrix::Ones(2, 1);
  ds.views = {v0, v1};

  auto identity_stack = [](int width, MLPSpec::Final fin) {
    DenseStack s;
    s.spec.layer_widths = {width, width};
    s.spec.final_activation = fin;
    s.weights = {Matrix::Identity(width, width)};
    s.biases = {Matrix::Zero(1, width)};
    return s;
  };

  ModelParams params;
  AutoencoderParams ae0, ae1;
  ae0.view_index = 0;
  ae0.encoder.spec.layer_widths = {1, 2};
  ae0.encoder.weights = {Matrix{{std::log(0.6), std::log(0.4)}}};
  ae0.encoder.biases = {Matrix::Zero(1, 2)};
  ae0.decoder = identity_stack(2, MLPSpec::Final::none);
  ae1 = ae0;
  ae1.view_index = 1;
  ae1.encoder.weights = {Matrix{{std::log(0.2), std::log(0.8)}}};
  params.autoencoders = {ae0, ae1};
  params.heads.student = identity_stack(2, MLPSpec::Final::none);
  params.heads.predictor = identity_stack(2, MLPSpec::Final::softmax);
  params.heads.teacher = identity_stack(2, MLPSpec::Final::none);

  const InferenceResult result = infer_clusters(ds, params);
  CHECK(result.probs(0, 0) == doctest::Approx(0.4));
  CHECK(result.probs(0, 1) == doctest::Approx(0.6));
  CHECK(result.labels == std::vector<int>{1, 1});

  // Tie row picks the lowest index.
  params.autoencoders[0].encoder.weights[0] = Matrix{{std::log(0.5), std::log(0.5)}};
  params.autoencoders[1].encoder.weights[0] = Matrix{{std::log(0.5), std::log(0.5)}};
  const InferenceResult tie = infer_clusters(ds, params);
  CHECK(tie.probs(0, 0) == doctest::Approx(0.5));
  CHECK(tie.labels == std::vector<int>{0, 0});

  // Identical one-hot rows across views pick that cluster.
  params.autoencoders[0].encoder.weights[0] = Matrix{{-30.0, 30.0}};
  params.autoencoders[1].encoder.weights[0] = Matrix{{-30.0, 30.0}};
  const InferenceResult hot = infer_clusters(ds, params);
  CHECK(hot.labels == std::vector<int>{1, 1});
}

TEST_CASE("trainer: finetune keeps or improves accuracy on blobs") {
  // Enter fine-tuning from a converged pretrain; distilling an undertrained
  // student is known to degrade it.
  SyntheticSpec spec;
  spec.n_per_cluster = 80;
  spec.k = 3;
  spec.view_dims = {6, 8};
  spec.cluster_separation = 6.0;
  spec.noise_scale = 0.1;
  spec.seed = 0;
  const MultiViewDataset ds = normalize_minmax(synth_generate(spec));
  TrainConfig cfg;
  cfg.latent_dim = 16;
  cfg.head_dim = 8;
  cfg.encoder_hidden = {24};
  cfg.head_hidden = 16;
  cfg.batch_size = 64;
  cfg.pretrain_epochs = 100;
  cfg.finetune_epochs = 8;
  cfg.learning_rate = 1e-3;
  cfg.seed = 0;
  const TrainResult pre = pretrain(ds, cfg);
  const InferenceResult pre_inf = infer_clusters(ds, pre.params);
  const double pre_acc = clustering_accuracy(pre_inf.labels, *ds.labels, ds.num_clusters);

  const TrainResult fin = finetune(ds, pre.params, cfg);
  const InferenceResult fin_inf = infer_clusters(ds, fin.params);
  const double fin_acc = clustering_accuracy(fin_inf.labels, *ds.labels, ds.num_clusters);
  CHECK(fin_acc >= pre_acc - 0.02);
}
