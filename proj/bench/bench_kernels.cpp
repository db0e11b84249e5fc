// Serial reference vs OpenMP kernels on typical batch shapes.
//
//   ./bench_kernels --benchmark_filter=Affine
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include "tailbalance/kernels.hpp"
#include "tailbalance/rng.hpp"

namespace tk = tailbalance::kernels;
using tailbalance::Rng;
using tailbalance::Tensor2;

namespace {

Tensor2 random(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor2 t(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Args: batch N, input D, output M.
template <auto Fn>
void BM_AffineForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Tensor2 x = random(n, d, 1), w = random(m, d, 2), b = random(1, m, 3);
  Tensor2 out(n, m);
  for (auto _ : state) {
    Fn(x, w, b.values(), out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * d * m));
}

template <auto Fn>
void BM_AffineBackwardInput(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Tensor2 g = random(n, m, 4), w = random(m, d, 5);
  Tensor2 dx(n, d);
  for (auto _ : state) {
    Fn(g, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * d * m));
}

template <auto Fn>
void BM_AffineBackwardParams(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const Tensor2 g = random(n, m, 6), x = random(n, d, 7);
  Tensor2 dw(m, d), db(1, m);
  for (auto _ : state) {
    Fn(g, x, dw, db.values());
    benchmark::DoNotOptimize(dw.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * d * m));
}

template <auto Fn>
void BM_Relu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor2 x = random(n, 256, 8);
  Tensor2 out(n, 256);
  for (auto _ : state) {
    Fn(x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * 256));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 2, 64})->Args({64, 64, 64})->Args({256, 256, 256})->Args({1024, 512, 100});
}

}  // namespace

BENCHMARK(BM_AffineForward<tk::serial::affine_forward>)->Apply(shapes);
BENCHMARK(BM_AffineForward<tk::parallel::affine_forward>)->Apply(shapes)->UseRealTime();
BENCHMARK(BM_AffineBackwardInput<tk::serial::affine_backward_input>)->Apply(shapes);
BENCHMARK(BM_AffineBackwardInput<tk::parallel::affine_backward_input>)->Apply(shapes)->UseRealTime();
BENCHMARK(BM_AffineBackwardParams<tk::serial::affine_backward_params>)->Apply(shapes);
BENCHMARK(BM_AffineBackwardParams<tk::parallel::affine_backward_params>)->Apply(shapes)->UseRealTime();
BENCHMARK(BM_Relu<tk::serial::relu_forward>)->Arg(64)->Arg(4096);
BENCHMARK(BM_Relu<tk::parallel::relu_forward>)->Arg(64)->Arg(4096)->UseRealTime();

BENCHMARK_MAIN();
