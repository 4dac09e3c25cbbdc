// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lgg/kernels.hpp"

namespace k = lgg::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& e : v) e = d(rng);
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, k::Trans::no, b, k::Trans::no, c, k::GemmShape{n, n, n});
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Dist>
void BM_pairwise(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64;
  const auto x = random_values(rows * dim, 3);
  std::vector<double> out(rows * rows);
  for (auto _ : state) {
    Dist(x, rows, dim, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Select>
void BM_knn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = random_values(n * n, 4);
  std::vector<unsigned char> mask(n * n);
  for (auto _ : state) {
    Select(s, n, 10, mask);
    benchmark::DoNotOptimize(mask.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::omp::gemm>)->Name("gemm/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_pairwise<k::serial::pairwise_sq_dist>)->Name("pairwise_sq_dist/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_pairwise<k::omp::pairwise_sq_dist>)->Name("pairwise_sq_dist/omp")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_knn<k::serial::knn_select>)->Name("knn_select/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(BM_knn<k::omp::knn_select>)->Name("knn_select/omp")->RangeMultiplier(2)->Range(64, 512);

BENCHMARK_MAIN();
