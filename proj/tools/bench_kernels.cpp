// Times the serial reference kernels against the OpenMP variants and checks
// that both produce byte-identical output. Usage: bench_kernels [size]
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gebd/kernels.hpp"
#include "gebd/mat.hpp"
#include "gebd/random.hpp"

using gebd::Mat;
using gebd::Rng;
namespace k = gebd::kernels;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

void report(const char* name, double flops, double serial_s, double omp_s, bool identical) {
    std::printf("%-14s serial %8.3f ms (%6.2f GF/s)   omp %8.3f ms (%6.2f GF/s)   speedup %5.2fx   %s\n",
                name, serial_s * 1e3, flops / serial_s * 1e-9, omp_s * 1e3,
                flops / omp_s * 1e-9, serial_s / omp_s,
                identical ? "bit-identical" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::stoi(argv[1]) : 512;
    const int reps = 3;
    Rng rng(7);

    const Mat a = random_mat(n, n, rng);
    const Mat b = random_mat(n, n, rng);

    bool all_identical = true;

    {
        Mat out_s(n, n), out_p(n, n);
        const double ts = time_best_of(reps, [&] { k::matmul_serial(a, b, out_s); });
        const double tp = time_best_of(reps, [&] { k::matmul_omp(a, b, out_p); });
        const bool same = bitwise_equal(out_s, out_p);
        all_identical = all_identical && same;
        report("matmul", 2.0 * n * n * n, ts, tp, same);
    }
    {
        Mat out_s(n, n), out_p(n, n);
        const double ts = time_best_of(reps, [&] { k::matmul_bt_serial(a, b, out_s); });
        const double tp = time_best_of(reps, [&] { k::matmul_bt_omp(a, b, out_p); });
        const bool same = bitwise_equal(out_s, out_p);
        all_identical = all_identical && same;
        report("matmul_bt", 2.0 * n * n * n, ts, tp, same);
    }
    {
        Mat out_s(n, n), out_p(n, n);
        const double ts = time_best_of(reps, [&] { k::matmul_at_serial(a, b, out_s); });
        const double tp = time_best_of(reps, [&] { k::matmul_at_omp(a, b, out_p); });
        const bool same = bitwise_equal(out_s, out_p);
        all_identical = all_identical && same;
        report("matmul_at", 2.0 * n * n * n, ts, tp, same);
    }
    {
        Mat out_s(n, n), out_p(n, n);
        const double ts = time_best_of(reps, [&] { k::softmax_rows_serial(a, out_s); });
        const double tp = time_best_of(reps, [&] { k::softmax_rows_omp(a, out_p); });
        const bool same = bitwise_equal(out_s, out_p);
        all_identical = all_identical && same;
        report("softmax_rows", 5.0 * n * n, ts, tp, same);
    }
    {
        Mat out_s(n, n), out_p(n, n);
        const double ts = time_best_of(reps, [&] { k::axpy_serial(0.5, a, out_s); });
        const double tp = time_best_of(reps, [&] { k::axpy_omp(0.5, a, out_p); });
        const bool same = bitwise_equal(out_s, out_p);
        all_identical = all_identical && same;
        report("axpy", 2.0 * n * n, ts, tp, same);
    }

    if (!all_identical) {
        std::fprintf(stderr, "serial and OpenMP outputs differ\n");
        return 1;
    }
    return 0;
}
