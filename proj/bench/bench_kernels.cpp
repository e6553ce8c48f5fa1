// Production (im2col + GEMM, OpenMP) kernels against the serial direct-loop references.

#include <benchmark/benchmark.h>

#include <random>

#include "lesyn/kernels.hpp"

using namespace lesyn;
namespace K = lesyn::kernels;

namespace {

Tensor<float> random_tensor(std::array<int, 4> s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 1.0f);
    Tensor<float> t(s);
    for (auto& v : t.data) v = d(rng);
    return t;
}

// args: batch, in channels, out channels, spatial size, kernel, stride
struct ConvCase {
    Tensor<float> x, w, b;
    K::ConvGeometry g;
    explicit ConvCase(const benchmark::State& st)
        : x(random_tensor({int(st.range(0)), int(st.range(1)), int(st.range(3)), int(st.range(3))}, 1)),
          w(random_tensor({int(st.range(2)), int(st.range(1)), int(st.range(4)), int(st.range(4))}, 2)),
          b(random_tensor({1, int(st.range(2)), 1, 1}, 3)),
          g{int(st.range(4)), int(st.range(5)), 1} {}
};

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({4, 16, 32, 32, 4, 2})->Args({4, 32, 16, 32, 3, 1})->Args({4, 64, 64, 8, 3, 1});
}

void BM_ConvForward(benchmark::State& st) {
    ConvCase c(st);
    for (auto _ : st) benchmark::DoNotOptimize(K::conv2d_forward<float>(c.x, c.w, c.b.data, c.g));
}
void BM_ConvForwardReference(benchmark::State& st) {
    ConvCase c(st);
    for (auto _ : st) benchmark::DoNotOptimize(K::reference::conv2d_forward<float>(c.x, c.w, c.b.data, c.g));
}
void BM_ConvBackward(benchmark::State& st) {
    ConvCase c(st);
    const auto y = K::conv2d_forward<float>(c.x, c.w, c.b.data, c.g);
    Tensor<float> dx, dw(c.w.shape()), db(c.b.shape());
    for (auto _ : st) K::conv2d_backward<float>(c.x, c.w, y, c.g, &dx, dw, db.data);
}
void BM_ConvBackwardReference(benchmark::State& st) {
    ConvCase c(st);
    const auto y = K::reference::conv2d_forward<float>(c.x, c.w, c.b.data, c.g);
    Tensor<float> dx, dw(c.w.shape()), db(c.b.shape());
    for (auto _ : st) K::reference::conv2d_backward<float>(c.x, c.w, y, c.g, &dx, dw, db.data);
}

void BM_Dense(benchmark::State& st) {
    const auto x = random_tensor({4, int(st.range(0)), 1, 1}, 1);
    const auto w = random_tensor({int(st.range(1)), int(st.range(0)), 1, 1}, 2);
    for (auto _ : st) benchmark::DoNotOptimize(K::dense_forward<float>(x, w, {}));
}
void BM_DenseReference(benchmark::State& st) {
    const auto x = random_tensor({4, int(st.range(0)), 1, 1}, 1);
    const auto w = random_tensor({int(st.range(1)), int(st.range(0)), 1, 1}, 2);
    for (auto _ : st) benchmark::DoNotOptimize(K::reference::dense_forward<float>(x, w, {}));
}

}  // namespace

BENCHMARK(BM_ConvForward)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackward)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Dense)->Args({356, 4096})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseReference)->Args({356, 4096})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
