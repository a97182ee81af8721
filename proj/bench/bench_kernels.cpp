#include <benchmark/benchmark.h>

#include <vector>

#include "flsim/kernels.hpp"
#include "flsim/nn.hpp"
#include "flsim/rng.hpp"

// Layer-shaped microbenchmarks comparing the OpenMP kernels against the
// serial reference implementations, plus whole-network forward/backward at
// training batch size.

using namespace flsim;

namespace {

std::vector<float> randu(std::size_t n, std::uint64_t seed) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng::u01(rng::derive(seed, i)) - 0.5f;
    return v;
}

// the heaviest layer in the default architecture: 5x5 conv, 64 -> 16 channels
constexpr kern::ConvDims kConv2{25, 25, 64, 5, 16};
constexpr int kBatch = 50;

void conv2_flops(benchmark::State& state) {
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * kBatch);
    const double flops_per_sample =
        2.0 * kConv2.oh() * kConv2.ow() * kConv2.oc * kConv2.k * kConv2.k * kConv2.ic;
    state.counters["GFLOP/s"] = benchmark::Counter(
        flops_per_sample * kBatch * static_cast<double>(state.iterations()) / 1e9,
        benchmark::Counter::kIsRate);
}

void BM_conv2_forward_omp(benchmark::State& state) {
    const auto in = randu(static_cast<std::size_t>(kBatch) * 25 * 25 * 64, 1);
    const auto w = randu(static_cast<std::size_t>(5) * 5 * 64 * 16, 2);
    const auto b = randu(16, 3);
    std::vector<float> out(static_cast<std::size_t>(kBatch) * 21 * 21 * 16);
    for (auto _ : state) {
        kern::conv2d_forward(kBatch, in.data(), w.data(), b.data(), out.data(), kConv2);
        benchmark::DoNotOptimize(out.data());
    }
    conv2_flops(state);
}
BENCHMARK(BM_conv2_forward_omp)->Unit(benchmark::kMillisecond);

void BM_conv2_forward_ref(benchmark::State& state) {
    const auto in = randu(static_cast<std::size_t>(kBatch) * 25 * 25 * 64, 1);
    const auto w = randu(static_cast<std::size_t>(5) * 5 * 64 * 16, 2);
    const auto b = randu(16, 3);
    std::vector<float> out(static_cast<std::size_t>(kBatch) * 21 * 21 * 16);
    for (auto _ : state) {
        kern::ref::conv2d_forward(kBatch, in.data(), w.data(), b.data(), out.data(),
                                  kConv2);
        benchmark::DoNotOptimize(out.data());
    }
    conv2_flops(state);
}
BENCHMARK(BM_conv2_forward_ref)->Unit(benchmark::kMillisecond);

void BM_conv2_backward_omp(benchmark::State& state) {
    const auto in = randu(static_cast<std::size_t>(kBatch) * 25 * 25 * 64, 4);
    const auto w = randu(static_cast<std::size_t>(5) * 5 * 64 * 16, 5);
    const auto dout = randu(static_cast<std::size_t>(kBatch) * 21 * 21 * 16, 6);
    std::vector<float> din(in.size()), dw(w.size()), db(16);
    for (auto _ : state) {
        kern::conv2d_backward_input(kBatch, dout.data(), w.data(), din.data(), kConv2);
        kern::conv2d_backward_params(kBatch, in.data(), dout.data(), dw.data(),
                                     db.data(), kConv2);
        benchmark::DoNotOptimize(din.data());
    }
}
BENCHMARK(BM_conv2_backward_omp)->Unit(benchmark::kMillisecond);

void BM_dense_forward_omp(benchmark::State& state) {
    const int in_dim = 64, out_dim = 128;
    const auto in = randu(static_cast<std::size_t>(kBatch) * in_dim, 7);
    const auto w = randu(static_cast<std::size_t>(in_dim) * out_dim, 8);
    const auto b = randu(out_dim, 9);
    std::vector<float> out(static_cast<std::size_t>(kBatch) * out_dim);
    for (auto _ : state) {
        kern::dense_forward(kBatch, in.data(), w.data(), b.data(), out.data(), in_dim,
                            out_dim);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_dense_forward_omp)->Unit(benchmark::kMicrosecond);

void BM_net_forward_train(benchmark::State& state) {
    const Model m = init_model(default_architecture(), 1);
    Tensor batch({kBatch, 28, 28, 1});
    for (std::size_t i = 0; i < batch.numel(); ++i)
        batch.data[i] = rng::u01(rng::derive(10, i));
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const ForwardTrace tr = forward(m, batch, ForwardMode::training(seed++));
        benchmark::DoNotOptimize(tr.probs().data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * kBatch);
}
BENCHMARK(BM_net_forward_train)->Unit(benchmark::kMillisecond);

void BM_net_train_step(benchmark::State& state) {
    Model m = init_model(default_architecture(), 1);
    Tensor batch({kBatch, 28, 28, 1});
    std::vector<int> labels(kBatch);
    for (std::size_t i = 0; i < batch.numel(); ++i)
        batch.data[i] = rng::u01(rng::derive(11, i));
    for (int i = 0; i < kBatch; ++i) labels[static_cast<std::size_t>(i)] = i % 10;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const ForwardTrace tr = forward(m, batch, ForwardMode::training(seed++));
        const GradientSet gs = backward(m, tr, labels);
        sgd_step(m, gs, 0.01f, 1e-4f);
        benchmark::DoNotOptimize(m.params[0].data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * kBatch);
}
BENCHMARK(BM_net_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
