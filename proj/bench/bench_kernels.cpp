// Serial vs OpenMP kernels, plus one full attention and encode call.
//   ./build/qvic_bench --benchmark_filter=matmul
//   OMP_NUM_THREADS=4 ./build/qvic_bench

#include <benchmark/benchmark.h>

#include "qvic/compressor.hpp"
#include "qvic/kernels.hpp"
#include "qvic/qmsa.hpp"
#include "qvic/rng.hpp"

using namespace qvic;

namespace {

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = rng.gaussian(n, n), b = rng.gaussian(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <Matrix (*Kernel)(const Matrix&, const MaskPattern&)>
void BM_MaskedSoftmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix logits = rng.gaussian(n, n, 4.0);
  const MaskPattern mask = MaskPattern::causal(n);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(logits, mask));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

// A clip of `frames` frames with P = 4, C = 2 and one text token.
void BM_Attention(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const TokenLayout l = build_layout({frames, 4, 2, 1});
  const AttentionHeadConfig cfg{32, 4, ScaleDenominator::HeadDim};
  Rng rng(3);
  const AttentionWeights w = AttentionWeights::random(cfg, rng);
  const Matrix x = rng.gaussian(l.size(), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(qmsa_attention(x, w, cfg, l, MaskVariant::Full, true));
  }
  state.counters["N_enc"] = static_cast<double>(l.size());
}

void BM_Encode(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  CompressorConfig cfg;
  cfg.model_dim = 32;
  cfg.max_frames = frames;
  const TokenLayout l = build_layout({frames, cfg.patches_per_frame, cfg.context_per_frame, 1});
  const CompressorWeights w = CompressorWeights::init(cfg);
  Rng rng(4);
  const Matrix x = rng.gaussian(l.size(), cfg.model_dim);
  for (auto _ : state) benchmark::DoNotOptimize(encode(x, l, cfg, w));
  state.counters["N_enc"] = static_cast<double>(l.size());
}

}  // namespace

BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<kernels::serial::matmul_transposed>)->Name("matmul_transposed/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<kernels::parallel::matmul_transposed>)->Name("matmul_transposed/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_MaskedSoftmax<kernels::serial::masked_softmax>)->Name("masked_softmax/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_MaskedSoftmax<kernels::parallel::masked_softmax>)->Name("masked_softmax/parallel")->Arg(128)->Arg(512);
BENCHMARK(BM_Attention)->Arg(16)->Arg(64);
BENCHMARK(BM_Encode)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
