// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "diagnostica/fcn.hpp"
#include "diagnostica/kernels.hpp"

namespace {

using diagnostica::kernels::ConvShape;

struct ConvData {
  ConvShape shape;
  std::vector<double> in, weight, bias, out;

  explicit ConvData(std::size_t channels) {
    shape = {channels, 2 * channels, 512, 5};
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    in.resize(shape.in_channels * shape.length);
    weight.resize(shape.out_channels * shape.in_channels * shape.kernel);
    bias.resize(shape.out_channels);
    out.resize(shape.out_channels * shape.length);
    for (auto* v : {&in, &weight, &bias})
      for (auto& x : *v) x = n(rng);
  }
};

template <bool Parallel>
void BM_Conv1dForward(benchmark::State& state) {
  ConvData d(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel)
      diagnostica::kernels::parallel::conv1d_forward(d.shape, d.in, d.weight, d.bias, d.out);
    else
      diagnostica::kernels::serial::conv1d_forward(d.shape, d.in, d.weight, d.bias, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.out.size()));
}

template <bool Parallel>
void BM_IntersectCount(benchmark::State& state) {
  const auto words = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<std::uint64_t> a(words), b(words);
  for (auto& w : a) w = rng();
  for (auto& w : b) w = rng();
  for (auto _ : state) {
    std::size_t c = Parallel ? diagnostica::kernels::parallel::intersect_count(a, b)
                             : diagnostica::kernels::serial::intersect_count(a, b);
    benchmark::DoNotOptimize(c);
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * words * sizeof(std::uint64_t)));
}

void BM_Train(benchmark::State& state) {
  diagnostica::fcn::SyntheticConfig sc;
  sc.count = 64;
  const auto data = diagnostica::fcn::to_labeled(diagnostica::fcn::make_flat_vs_spike(sc));
  diagnostica::fcn::TrainConfig tc;
  tc.epochs = 2;
  for (auto _ : state) benchmark::DoNotOptimize(diagnostica::fcn::train(tc, data).training_accuracy);
}

}  // namespace

BENCHMARK(BM_Conv1dForward<false>)->Name("conv1d_forward/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_Conv1dForward<true>)->Name("conv1d_forward/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_IntersectCount<false>)->Name("intersect_count/serial")->Arg(1 << 10)->Arg(1 << 16);
BENCHMARK(BM_IntersectCount<true>)->Name("intersect_count/parallel")->Arg(1 << 10)->Arg(1 << 16);
BENCHMARK(BM_Train)->Name("fcn_train/2_epochs")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
