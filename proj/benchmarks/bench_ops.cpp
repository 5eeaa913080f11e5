#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "dbda/losses.hpp"
#include "dbda/rng.hpp"
#include "dbda/tensor.hpp"

using namespace dbda;

namespace {

std::vector<double> random_values(int64_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

Tensor random_constant(std::vector<int64_t> shape, uint64_t seed) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return Tensor::constant(std::move(shape), random_values(n, seed));
}

Tensor random_param(std::vector<int64_t> shape, uint64_t seed) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return Tensor::parameter(std::move(shape), random_values(n, seed));
}

void bm_conv2d_forward(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor x = random_constant({1, 8, hw, hw}, 1);
  Tensor k = random_constant({8, 8, 3, 3}, 2);
  for (auto _ : state) {
    Tensor y = conv2d(x, k);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}

void bm_conv2d_train(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor x = random_constant({1, 8, hw, hw}, 1);
  Tensor k = random_param({8, 8, 3, 3}, 2);
  for (auto _ : state) {
    Tensor loss = sum(conv2d(x, k));
    loss.backward();
    benchmark::DoNotOptimize(k.grad().data());
    k.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}

void bm_softmax_channel(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor x = random_constant({2, 8, hw, hw}, 3);
  for (auto _ : state) {
    Tensor y = softmax_channel(x);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * hw * hw);
}

void bm_matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  Tensor a = random_constant({n, n}, 4);
  Tensor b = random_constant({n, n}, 5);
  for (auto _ : state) {
    Tensor y = matmul(a, b);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}

void bm_avg_pool2(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor x = random_constant({2, 8, hw, hw}, 6);
  for (auto _ : state) {
    Tensor y = avg_pool2(x);
    benchmark::DoNotOptimize(y.values().data());
  }
}

void bm_entropy_loss(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor probs = softmax_channel(random_constant({2, 6, hw, hw}, 7));
  for (auto _ : state) {
    LossValue l = entropy_min(probs);
    benchmark::DoNotOptimize(l.detached);
  }
}

void bm_kl_alignment(benchmark::State& state) {
  const int64_t hw = state.range(0);
  Tensor src = softmax_channel(random_constant({2, 6, hw, hw}, 8));
  Tensor tgt = softmax_channel(random_constant({2, 6, hw, hw}, 9));
  for (auto _ : state) {
    LossValue l = kl_distribution(soft_class_distribution(src), soft_class_distribution(tgt));
    benchmark::DoNotOptimize(l.detached);
  }
}

BENCHMARK(bm_conv2d_forward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_conv2d_train)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_softmax_channel)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_matmul)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_avg_pool2)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_entropy_loss)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_kl_alignment)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
