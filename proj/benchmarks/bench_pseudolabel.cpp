#include <benchmark/benchmark.h>

#include "mvclust/pseudolabel.hpp"

using namespace mvclust;

static void BM_KMeans(benchmark::State& state) {
  std::srand(7);
  const Matrix pts = Matrix::Random(state.range(0), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans(pts, 8, 1));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KMeans)->RangeMultiplier(2)->Range(128, 2048)->Complexity();

static void BM_Hungarian(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  ContingencyMatrix cont;
  cont.counts = Eigen::MatrixXi(k, k);
  std::srand(9);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) cont.counts(i, j) = std::rand() % 1000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hungarian_align(cont));
  }
}
BENCHMARK(BM_Hungarian)->DenseRange(2, 10, 2);

static void BM_DarkKnowledge(benchmark::State& state) {
  std::srand(11);
  const Matrix t = Matrix::Random(state.range(0), 256);
  const Matrix centroids = Matrix::Random(8, 256);
  const std::vector<int> perm{0, 1, 2, 3, 4, 5, 6, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(dark_knowledge({t}, centroids, {perm}, DarkMode::soft, 1.0));
  }
}
BENCHMARK(BM_DarkKnowledge)->RangeMultiplier(2)->Range(128, 1024);
