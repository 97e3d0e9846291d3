#include <benchmark/benchmark.h>

#include <vector>

#include "handtraj/common/rng.hpp"
#include "handtraj/datasetgen/synth.hpp"
#include "handtraj/eval/report.hpp"
#include "handtraj/kernels/gemm.hpp"

using namespace handtraj;

namespace {

std::vector<float> random_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

template <kernels::Backend B>
void BM_GemmNN(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 1), b = random_matrix(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    kernels::gemm_nn<float>(n, n, n, a, b, c, B);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <kernels::Backend B>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 3), b = random_matrix(n * n, 4);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0f);
    kernels::gemm_nt<float>(n, n, n, a, b, c, B);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_Evaluate(benchmark::State& state) {
  const auto world = datasetgen::synth_world(0, 256, datasetgen::SynthSpec{});
  const auto gt = world.gt_samples();
  const auto preds = eval::baseline_predictions(gt, eval::BaselineKind::kKalman);
  eval::EvalOptions opts;
  opts.parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate(gt, preds, opts).mean_ade);
}

}  // namespace

BENCHMARK(BM_GemmNN<kernels::Backend::kSerial>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNN<kernels::Backend::kOpenMP>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<kernels::Backend::kSerial>)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<kernels::Backend::kOpenMP>)->Arg(64)->Arg(256);
BENCHMARK(BM_Evaluate)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
