#include <benchmark/benchmark.h>

#include <vector>

#include "vccdsa/baselines.hpp"
#include "vccdsa/metrics.hpp"
#include "vccdsa/network.hpp"
#include "vccdsa/phantom.hpp"
#include "vccdsa/training.hpp"

using namespace vccdsa;

namespace {

DSASequence bench_sequence(int size) {
  PhantomConfig c;
  c.height = c.width = size;
  return make_sequence(c, 3, 1);
}

void BM_Warp(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const DSASequence s = bench_sequence(size);
  const MotionField m = sample_motion(4, 7, size, size);
  for (auto _ : state) benchmark::DoNotOptimize(warp(s.lives[0], m));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Warp)->Arg(64)->Arg(256);

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const DSASequence s = bench_sequence(size);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(s.weak_labels[0], s.vessels_gt[0]));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

void BM_TranslationRegistration(benchmark::State& state) {
  const DSASequence s = bench_sequence(64);
  for (auto _ : state) benchmark::DoNotOptimize(translation_registration(s.lives[0], s.masks[0]));
}
BENCHMARK(BM_TranslationRegistration);

void BM_PhantomSequence(benchmark::State& state) {
  PhantomConfig c;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(make_sequence(c, 2, seed++));
}
BENCHMARK(BM_PhantomSequence);

void BM_Forward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Network<float> net(ArchConfig::desk_scale(), 0);
  const DSASequence s = bench_sequence(size);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, s.masks[0], s.lives[0]));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

// One desk-scale optimizer step: batch 4, 64x64 crops, both branches.
void BM_TrainStep(benchmark::State& state) {
  Network<float> net(ArchConfig::desk_scale(), 0);
  const DSASequence s = bench_sequence(64);
  std::vector<TrainSample> batch;
  for (int b = 0; b < 4; ++b) {
    TrainSample x;
    x.mask_i = s.masks[0];
    x.mask_j = s.masks[1 + b % 3];
    x.live = s.lives[b];
    x.weak_label = s.weak_labels[b];
    batch.push_back(x);
  }
  const TrainConfig cfg = TrainConfig::desk_scale();
  AdamState adam;
  int step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(net, batch, cfg, adam, ++step));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
