#include <benchmark/benchmark.h>

#include "mvclust/losses.hpp"

using namespace mvclust;

namespace {

std::vector<Matrix> random_views(Eigen::Index n, Eigen::Index d, unsigned seed) {
  std::srand(seed);
  return {Matrix::Random(n, d), Matrix::Random(n, d)};
}

std::vector<Matrix> random_stochastic_views(Eigen::Index n, Eigen::Index k, unsigned seed) {
  std::srand(seed);
  std::vector<Matrix> views;
  for (int v = 0; v < 2; ++v) {
    Matrix m = Matrix::Random(n, k).array().abs() + 0.05;
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
    views.push_back(std::move(m));
  }
  return views;
}

}  // namespace

static void BM_StudentContrastive(benchmark::State& state) {
  const auto views = random_stochastic_views(state.range(0), 10, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(student_contrastive_loss(views, 0.5));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_StudentContrastive)->RangeMultiplier(2)->Range(32, 512)->Complexity();

static void BM_TeacherContrastive(benchmark::State& state) {
  const auto views = random_views(state.range(0), 256, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(teacher_contrastive_loss(views, 1.0));
  }
}
BENCHMARK(BM_TeacherContrastive)->RangeMultiplier(2)->Range(32, 512);

static void BM_IicMiLoss(benchmark::State& state) {
  const auto views = random_views(128, state.range(0), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(iic_mi_loss(views));
  }
}
BENCHMARK(BM_IicMiLoss)->RangeMultiplier(4)->Range(8, 512);

static void BM_ContrastiveBackward(benchmark::State& state) {
  const auto views = random_stochastic_views(state.range(0), 10, 4);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Value loss = graph::student_contrastive_loss(
        {tape.constant(views[0]), tape.constant(views[1])}, 0.5);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_ContrastiveBackward)->RangeMultiplier(2)->Range(32, 256);

BENCHMARK_MAIN();
