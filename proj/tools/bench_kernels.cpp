// Benchmarks the OpenMP matmul kernels against the serial reference and
// checks that both produce bit-identical output.

#include "slm/mat.hpp"
#include "slm/rng.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

using namespace slm;

namespace {

double time_ms(const std::function<void()> & fn, int reps) {
    fn(); // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; i++) {
        fn();
    }
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Mat random_mat(int rows, int cols, std::mt19937_64 & rng) {
    Mat m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto & v : m.data) {
        v = dist(rng);
    }
    return m;
}

bool identical(const Mat & a, const Mat & b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

} // namespace

int main() {
    auto rng = make_rng(derive_seed(0, "bench"));
    const int sizes[] = {64, 128, 256, 512};
    bool all_match = true;

    std::printf("%-10s %6s %12s %12s %8s %6s\n", "kernel", "n", "serial ms", "omp ms",
                "speedup", "match");
    for (int n : sizes) {
        Mat a = random_mat(n, n, rng);
        Mat b = random_mat(n, n, rng);
        const int reps = n <= 128 ? 20 : 5;

        struct Case {
            const char * name;
            std::function<void(const Mat &, const Mat &, Mat &)> serial, omp;
        };
        const Case cases[] = {
            {"matmul", kernels::serial::matmul, kernels::matmul},
            {"matmul_nt", kernels::serial::matmul_nt, kernels::matmul_nt},
            {"matmul_tn", kernels::serial::matmul_tn, kernels::matmul_tn},
        };
        for (const auto & c : cases) {
            Mat ref(n, n), out(n, n);
            const double t_serial = time_ms([&] { c.serial(a, b, ref); }, reps);
            const double t_omp = time_ms([&] { c.omp(a, b, out); }, reps);
            const bool match = identical(ref, out);
            all_match = all_match && match;
            std::printf("%-10s %6d %12.3f %12.3f %7.2fx %6s\n", c.name, n, t_serial, t_omp,
                        t_serial / t_omp, match ? "yes" : "NO");
        }
    }
    if (!all_match) {
        std::fprintf(stderr, "kernel outputs diverged\n");
        return 1;
    }
    return 0;
}
