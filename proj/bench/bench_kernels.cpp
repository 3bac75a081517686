// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "fairprep/kernels.hpp"
#include "fairprep/rng.hpp"

namespace {

using namespace fairprep;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Batch of 256 rows through a square dense layer of the given width.
template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const std::size_t m = 256, k = static_cast<std::size_t>(state.range(0)), n = k;
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    Gemm(a, b, out, m, k, n, false);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

// KNN scoring chunk: 256 query rows against a training set of the given size.
template <auto Distances>
void BM_sq_distances(benchmark::State& state) {
  const std::size_t m = 256, p = static_cast<std::size_t>(state.range(0)), d = 16;
  const auto a = random_values(m * d, 3), b = random_values(p * d, 4);
  std::vector<double> out(m * p);
  for (auto _ : state) {
    Distances(a, b, out, m, p, d);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * p));
}

BENCHMARK(BM_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(32)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::omp::gemm>)->Name("gemm/omp")->Arg(32)->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<kernels::omp::gemm_tn>)->Name("gemm_tn/omp")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_sq_distances<kernels::serial::sq_distances>)->Name("sq_distances/serial")->Arg(1000)->Arg(4000);
BENCHMARK(BM_sq_distances<kernels::omp::sq_distances>)->Name("sq_distances/omp")->Arg(1000)->Arg(4000)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
