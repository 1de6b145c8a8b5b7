// Serial reference kernels against the OpenMP versions. The thread count is
// the second benchmark argument; 0 selects the serial reference.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lgvq/kernels.hpp"

namespace k = lgvq::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void BM_gemm(benchmark::State& state) {
    const int n = int(state.range(0));
    const int threads = int(state.range(1));
    const auto a = random_values(std::size_t(n) * n, 1), b = random_values(std::size_t(n) * n, 2);
    std::vector<double> c(std::size_t(n) * n);
    if (threads > 0) k::set_num_threads(threads);
    for (auto _ : state) {
        if (threads == 0) k::reference::gemm(a, b, c, n, n, n, false);
        else k::gemm(a, b, c, n, n, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void BM_conv2d_forward(benchmark::State& state) {
    k::ConvGeometry g;
    g.batch = 8;
    g.in_h = g.in_w = int(state.range(0));
    g.in_c = 16;
    g.out_c = 32;
    const int threads = int(state.range(1));
    const auto in = random_values(std::size_t(g.in_size()), 3), w = random_values(std::size_t(g.weight_size()), 4);
    const auto bias = random_values(std::size_t(g.out_c), 5);
    std::vector<double> out(std::size_t(g.out_size()));
    if (threads > 0) k::set_num_threads(threads);
    for (auto _ : state) {
        if (threads == 0) k::reference::conv2d_forward(g, in, w, bias, out);
        else k::conv2d_forward(g, in, w, bias, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_nearest_codes(benchmark::State& state) {
    const int rows = int(state.range(0));
    const int threads = int(state.range(1));
    const int dim = 16, entries = 1024;
    const auto z = random_values(std::size_t(rows) * dim, 6), cb = random_values(std::size_t(entries) * dim, 7);
    std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
    if (threads > 0) k::set_num_threads(threads);
    for (auto _ : state) {
        if (threads == 0) k::reference::nearest_codes(z, cb, dim, out);
        else k::nearest_codes(z, cb, dim, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * rows);
}

void thread_sweep(benchmark::internal::Benchmark* b, std::vector<std::int64_t> sizes) {
    for (auto s : sizes)
        for (std::int64_t t : {0, 1, 2, 4, 8}) b->Args({s, t});
    b->ArgNames({"size", "threads"})->UseRealTime();
}

}  // namespace

BENCHMARK(BM_gemm)->Apply([](auto* b) { thread_sweep(b, {64, 256}); });
BENCHMARK(BM_conv2d_forward)->Apply([](auto* b) { thread_sweep(b, {16, 32}); });
BENCHMARK(BM_nearest_codes)->Apply([](auto* b) { thread_sweep(b, {1024, 8192}); });

BENCHMARK_MAIN();
