#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mvclust/network.hpp"
#include "mvclust/rng.hpp"

using namespace mvclust;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.latent_dim = 8;
  cfg.head_dim = 4;
  cfg.encoder_hidden = {8};
  cfg.head_hidden = 8;
  return cfg;
}

ModelParams tiny_params(int k = 2, std::uint64_t seed = 1) {
  return init_params(tiny_config(), {5, 7}, k, seed);
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.all_tensors();
  const auto tb = b.all_tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (*ta[i] != *tb[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("network: init is deterministic per seed") {
  CHECK(params_equal(tiny_params(2, 42), tiny_params(2, 42)));
  CHECK_FALSE(params_equal(tiny_params(2, 42), tiny_params(2, 43)));
}

TEST_CASE("network: default architecture widths") {
  TrainConfig cfg;
  const ModelParams params = init_params(cfg, {40, 60}, 5, 0);
  CHECK(params.autoencoders[0].encoder.spec.layer_widths ==
        std::vector<int>{40, 512, 1024, 2048, 512, 512});
  CHECK(params.autoencoders[0].decoder.spec.layer_widths ==
        std::vector<int>{512, 512, 2048, 1024, 512, 40});
  CHECK(params.heads.predictor.spec.output_width() == 5);
  CHECK(params.heads.student.spec.layer_widths == std::vector<int>{512, 512, 256});
  CHECK(params.heads.teacher.spec.layer_widths == std::vector<int>{512, 512, 256});
}

TEST_CASE("network: zero parameters give zero codes and reconstructions") {
  ModelParams params = tiny_params();
  for (Matrix* t : params.all_tensors()) t->setZero();
  const Matrix x = Matrix::Random(3, 5);
  const Matrix z = encode(params.autoencoders[0], x);
  CHECK(z.rows() == 3);
  CHECK(z.cols() == 8);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
  const Matrix xhat = decode(params.autoencoders[0], z);
  CHECK(xhat.cols() == 5);
  CHECK(xhat.cwiseAbs().maxCoeff() == 0.0);
  const Matrix t = teacher_features(params.heads, z);
  CHECK(t.cols() == 4);
  CHECK(t.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("network: forward shapes and finiteness") {
  const ModelParams params = tiny_params();
  const Matrix x = Matrix::Random(1, 5);
  const Matrix z = encode(params.autoencoders[0], x);
  CHECK(z.rows() == 1);
  CHECK(z.cols() == 8);
  CHECK(all_finite(z));
  CHECK(all_finite(decode(params.autoencoders[0], z)));
  CHECK_THROWS_AS(encode(params.autoencoders[0], Matrix::Random(2, 6)), ShapeError);
}

TEST_CASE("network: student_probs rows are distributions") {
  const ModelParams params = tiny_params();
  const Matrix z = 5.0 * Matrix::Random(32, 8);
  const Matrix y = student_probs(params.heads, z);
  CHECK(y.cols() == 2);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(y.row(i).minCoeff() >= 0.0);
    CHECK(std::abs(y.row(i).sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("network: zero logits give uniform probabilities") {
  ModelParams params = tiny_params(4);
  for (Matrix* t : params.all_tensors()) t->setZero();
  const Matrix y = student_probs(params.heads, Matrix::Random(3, 8));
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) CHECK(y(i, j) == doctest::Approx(0.25));
}

TEST_CASE("network: softmax is shift invariant") {
  ModelParams params = tiny_params(3);
  // A predictor with zero weights and a constant bias shift must match the
  // unshifted one exactly.
  ModelParams shifted = params;
  shifted.heads.predictor.biases[0].array() += 7.5;
  const Matrix z = Matrix::Random(6, 8);
  const Matrix a = student_probs(params.heads, z);
  const Matrix b = student_probs(shifted.heads, z);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    CHECK(a(i) == doctest::Approx(b(i)).epsilon(1e-12));
  }
}

TEST_CASE("network: teacher features deterministic on duplicate rows") {
  const ModelParams params = tiny_params();
  Matrix z(2, 8);
  z.row(0) = Eigen::RowVectorXd::LinSpaced(8, -1.0, 1.0);
  z.row(1) = z.row(0);
  const Matrix t = teacher_features(params.heads, z);
  CHECK(t.row(0) == t.row(1));
}

TEST_CASE("network: ema_update fixed points and arithmetic") {
  ModelParams params = tiny_params();
  ModelParams student = tiny_params(2, 9);

  SUBCASE("mu = 1 leaves the teacher unchanged") {
    const DenseStack before = params.heads.teacher;
    ema_update(params.heads.teacher, student.heads.student, 1.0);
    for (std::size_t l = 0; l < before.layer_count(); ++l) {
      CHECK(params.heads.teacher.weights[l] == before.weights[l]);
    }
  }
  SUBCASE("mu = 0 copies the student") {
    ema_update(params.heads.teacher, student.heads.student, 0.0);
    for (std::size_t l = 0; l < params.heads.teacher.layer_count(); ++l) {
      CHECK(params.heads.teacher.weights[l] == student.heads.student.weights[l]);
    }
  }
  SUBCASE("theta=2, xi=4, mu=0.5 gives 3") {
    for (auto& w : params.heads.teacher.weights) w.setConstant(2.0);
    for (auto& b : params.heads.teacher.biases) b.setConstant(2.0);
    for (auto& w : student.heads.student.weights) w.setConstant(4.0);
    for (auto& b : student.heads.student.biases) b.setConstant(4.0);
    ema_update(params.heads.teacher, student.heads.student, 0.5);
    CHECK(params.heads.teacher.weights[0](0, 0) == 3.0);
    CHECK(params.heads.teacher.biases[1](0, 0) == 3.0);
  }
  SUBCASE("affine in each scalar parameter") {
    const double theta = params.heads.teacher.weights[0](1, 2);
    const double xi = student.heads.student.weights[0](1, 2);
    ema_update(params.heads.teacher, student.heads.student, 0.996);
    CHECK(params.heads.teacher.weights[0](1, 2) == 0.996 * theta + (1.0 - 0.996) * xi);
  }
  SUBCASE("incongruent stacks are rejected") {
    DenseStack wrong = student.heads.predictor;
    CHECK_THROWS_AS(ema_update(params.heads.teacher, wrong, 0.5), ShapeError);
  }
}

TEST_CASE("network: checkpoint round-trip reproduces forwards bit-exactly") {
  const auto dir = fs::temp_directory_path() / "mvclust_test_ckpt";
  fs::create_directories(dir);
  const auto path = dir / "model.ckpt";

  TrainConfig cfg = tiny_config();
  cfg.tau_s = 0.37;
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.view_dims = {5, 7};
  ckpt.num_clusters = 3;
  ckpt.params = init_params(cfg, {5, 7}, 3, 123);
  ckpt.stage = Stage::pretrained;
  ckpt.rng_state = {1, 2, 3};
  save_checkpoint(ckpt, path);

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.stage == Stage::pretrained);
  CHECK(back.config.tau_s == cfg.tau_s);
  CHECK(back.view_dims == std::vector<int>{5, 7});
  CHECK(back.rng_state == std::vector<std::uint8_t>{1, 2, 3});

  const Matrix z = Matrix::Random(4, 8);
  const Matrix before = student_probs(ckpt.params.heads, z);
  const Matrix after = student_probs(back.params.heads, z);
  CHECK(before == after);  // bit-exact
}

TEST_CASE("network: checkpoint version and integrity errors") {
  const auto dir = fs::temp_directory_path() / "mvclust_test_ckpt2";
  fs::create_directories(dir);
  const auto path = dir / "model.ckpt";

  const TrainConfig cfg = tiny_config();
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.view_dims = {5, 7};
  ckpt.num_clusters = 2;
  ckpt.params = init_params(cfg, {5, 7}, 2, 1);
  save_checkpoint(ckpt, path);

  SUBCASE("wrong version byte") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);  // version field follows the 4-byte magic
    const char wrong = 9;
    f.write(&wrong, 1);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), VersionError);
  }
  SUBCASE("truncated file") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
  }
  SUBCASE("flipped payload byte") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    const char junk = 0x5a;
    f.write(&junk, 1);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), IntegrityError);
  }
}
