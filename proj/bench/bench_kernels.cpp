// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gestigo/condense/render.hpp"
#include "gestigo/nn/kernels.hpp"
#include "gestigo/rng.hpp"
#include "gestigo/synth/generator.hpp"

using namespace gestigo;

namespace {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

struct ConvData {
  nn::kernels::ConvGeometry g;
  std::vector<float> x, w, b, y;

  explicit ConvData(int size) {
    g.batch = 8;
    g.in_channels = 16;
    g.in_h = g.in_w = size;
    g.out_channels = 32;
    g.kernel = 3;
    g.stride = 1;
    g.padding = 1;
    Rng rng(1);
    x.resize(static_cast<std::size_t>(g.batch) * g.in_channels * size * size);
    w.resize(static_cast<std::size_t>(g.out_channels) * g.patch());
    b.resize(static_cast<std::size_t>(g.out_channels));
    for (auto* v : {&x, &w, &b})
      for (auto& e : *v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    y.resize(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_h() * g.out_w());
  }
};

void BM_Conv2dReference(benchmark::State& state) {
  ConvData d(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    nn::kernels::conv2d_forward_reference(d.g, d.x.data(), d.w.data(), d.b.data(), d.y.data());
    benchmark::DoNotOptimize(d.y.data());
  }
}

void BM_Conv2dThreads(benchmark::State& state) {
  ConvData d(static_cast<int>(state.range(0)));
  const int before = max_threads();
  set_threads(static_cast<int>(state.range(1)));
  for (auto _ : state) {
    nn::kernels::conv2d_forward(d.g, d.x.data(), d.w.data(), d.b.data(), d.y.data());
    benchmark::DoNotOptimize(d.y.data());
  }
  set_threads(before);
}

std::vector<dataset::SkeletonSequence> gestures(int n) {
  std::vector<dataset::SkeletonSequence> out;
  for (int i = 0; i < n; ++i) out.push_back(synth::dhg_gesture(1 + i % 14, 1 + i % 2, 1 + i % 20, 1, 17, 1 + i % 14));
  return out;
}

void BM_CondenseSerial(benchmark::State& state) {
  const auto seqs = gestures(8);
  const auto views = condense::vo_table(dataset::DatasetId::kDhg1428_14G);
  const auto cfg = condense::RenderConfig::for_size(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(condense::condense_batch_serial(seqs, views, cfg));
}

void BM_CondenseParallel(benchmark::State& state) {
  const auto seqs = gestures(8);
  const auto views = condense::vo_table(dataset::DatasetId::kDhg1428_14G);
  const auto cfg = condense::RenderConfig::for_size(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(condense::condense_batch(seqs, views, cfg));
}

void conv_args(benchmark::internal::Benchmark* b) {
  for (int size : {32, 64}) {
    b->Args({size, 1});
    if (max_threads() > 1) b->Args({size, max_threads()});
  }
}

}  // namespace

BENCHMARK(BM_Conv2dReference)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dThreads)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CondenseSerial)->Arg(224)->Arg(960)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CondenseParallel)->Arg(224)->Arg(960)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
