// Timing comparison of the serial reference kernels against their OpenMP
// variants. Not a test; run manually: ./bench_kernels [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "valign/kernels.hpp"
#include "valign/rng.hpp"

using namespace valign;

namespace {

double time_ms(const auto& fn, int reps) {
    // warmup
    fn();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : 4;
    kernels::set_threads(threads);

    Rng rng(42);
    std::printf("%-22s %8s %12s %12s %8s\n", "kernel", "size", "serial_ms",
                "parallel_ms", "speedup");

    for (std::int64_t n : {128, 512, 1024}) {
        const std::int64_t k = 256, m = 256;
        std::vector<double> a(static_cast<std::size_t>(n * k));
        std::vector<double> b(static_cast<std::size_t>(m * k));
        std::vector<double> c(static_cast<std::size_t>(n * m));
        for (auto& x : a) x = rng.gaussian();
        for (auto& x : b) x = rng.gaussian();
        const double ts = time_ms(
            [&] { kernels::matmul_nt_serial(a, b, c, n, k, m); }, 3);
        const double tp = time_ms(
            [&] { kernels::matmul_nt_parallel(a, b, c, n, k, m); }, 3);
        std::printf("%-22s %8lld %12.3f %12.3f %7.2fx\n", "matmul_nt",
                    static_cast<long long>(n), ts, tp, ts / tp);
    }

    for (std::int64_t nq : {256, 1024}) {
        const std::int64_t nr = 4096, d = 16;
        std::vector<double> q(static_cast<std::size_t>(nq * d));
        std::vector<double> r(static_cast<std::size_t>(nr * d));
        std::vector<double> o(static_cast<std::size_t>(nq * nr));
        for (auto& x : q) x = rng.gaussian();
        for (auto& x : r) x = rng.gaussian();
        const double ts = time_ms(
            [&] { kernels::pairwise_sqdist_serial(q, r, o, nq, nr, d); }, 3);
        const double tp = time_ms(
            [&] { kernels::pairwise_sqdist_parallel(q, r, o, nq, nr, d); },
            3);
        std::printf("%-22s %8lld %12.3f %12.3f %7.2fx\n", "pairwise_sqdist",
                    static_cast<long long>(nq), ts, tp, ts / tp);
    }
    return 0;
}
