#include <benchmark/benchmark.h>

#include "mvclust/trainer.hpp"

using namespace mvclust;

namespace {

MultiViewDataset bench_dataset(int n_per) {
  SyntheticSpec spec;
  spec.n_per_cluster = n_per;
  spec.k = 3;
  spec.view_dims = {10, 12};
  spec.seed = 1;
  return normalize_minmax(synth_generate(spec));
}

TrainConfig bench_config(int latent) {
  TrainConfig cfg;
  cfg.latent_dim = latent;
  cfg.head_dim = latent / 2;
  cfg.encoder_hidden = {latent, latent};
  cfg.head_hidden = latent;
  cfg.pretrain_epochs = 1;
  cfg.finetune_epochs = 1;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

static void BM_PretrainEpoch(benchmark::State& state) {
  const MultiViewDataset ds = bench_dataset(100);
  const TrainConfig cfg = bench_config(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(pretrain(ds, cfg));
  }
}
BENCHMARK(BM_PretrainEpoch)->RangeMultiplier(2)->Range(16, 128)->Unit(benchmark::kMillisecond);

static void BM_FinetuneEpoch(benchmark::State& state) {
  const MultiViewDataset ds = bench_dataset(100);
  const TrainConfig cfg = bench_config(static_cast<int>(state.range(0)));
  const TrainResult pre = pretrain(ds, cfg);
  for (auto _ : state) {
    ModelParams params = pre.params;
    benchmark::DoNotOptimize(finetune(ds, std::move(params), cfg));
  }
}
BENCHMARK(BM_FinetuneEpoch)->RangeMultiplier(2)->Range(16, 128)->Unit(benchmark::kMillisecond);

static void BM_Inference(benchmark::State& state) {
  const MultiViewDataset ds = bench_dataset(static_cast<int>(state.range(0)));
  const TrainConfig cfg = bench_config(64);
  const ModelParams params = init_params(cfg, ds.view_dims(), ds.num_clusters, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(infer_clusters(ds, params));
  }
}
BENCHMARK(BM_Inference)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);
