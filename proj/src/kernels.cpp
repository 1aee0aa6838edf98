#include "gebd/kernels.hpp"

#include <cassert>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gebd::kernels {

namespace {

// OpenMP pays off only for reasonably large products; everything in the
// pipeline below this bound runs serially.
constexpr long long kParallelFlopCutoff = 1LL << 21;

inline long long product_flops(const Mat& a, const Mat& b) {
    return static_cast<long long>(a.rows()) * a.cols() * b.cols();
}

inline void matmul_row(const double* arow, const double* bdata, double* crow, int k, int n) {
    for (int j = 0; j < n; ++j) crow[j] = 0.0;
    for (int kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = bdata + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void matmul_bt_row(const double* arow, const Mat& b, double* crow, int k, int n) {
    for (int j = 0; j < n; ++j) {
        const double* brow = b.data() + static_cast<std::size_t>(j) * k;
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] = acc;
    }
}

inline void softmax_row(const double* in, double* out, int n) {
    double mx = in[0];
    for (int j = 1; j < n; ++j) mx = in[j] > mx ? in[j] : mx;
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < n; ++j) out[j] *= inv;
}

} // namespace

void matmul_serial(const Mat& a, const Mat& b, Mat& out) {
    assert(a.cols() == b.rows());
    out = Mat(a.rows(), b.cols());
    const int k = a.cols(), n = b.cols();
    for (int i = 0; i < a.rows(); ++i)
        matmul_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                   out.data() + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_omp(const Mat& a, const Mat& b, Mat& out) {
    assert(a.cols() == b.rows());
    out = Mat(a.rows(), b.cols());
    const int m = a.rows(), k = a.cols(), n = b.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        matmul_row(a.data() + static_cast<std::size_t>(i) * k, b.data(),
                   out.data() + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_bt_serial(const Mat& a, const Mat& b, Mat& out) {
    assert(a.cols() == b.cols());
    out = Mat(a.rows(), b.rows());
    const int k = a.cols(), n = b.rows();
    for (int i = 0; i < a.rows(); ++i)
        matmul_bt_row(a.data() + static_cast<std::size_t>(i) * k, b,
                      out.data() + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_bt_omp(const Mat& a, const Mat& b, Mat& out) {
    assert(a.cols() == b.cols());
    out = Mat(a.rows(), b.rows());
    const int m = a.rows(), k = a.cols(), n = b.rows();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        matmul_bt_row(a.data() + static_cast<std::size_t>(i) * k, b,
                      out.data() + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_at_serial(const Mat& a, const Mat& b, Mat& out) {
    assert(a.rows() == b.rows());
    out = Mat(a.cols(), b.cols());
    const int m = a.cols(), n = b.cols(), k = a.rows();
    for (int i = 0; i < m; ++i) {
        double* crow = out.data() + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = a(kk, i);
            const double* brow = b.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_at_omp(const Mat& a, const Mat& b, Mat& out) {
    assert(a.rows() == b.rows());
    out = Mat(a.cols(), b.cols());
    const int m = a.cols(), n = b.cols(), k = a.rows();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* crow = out.data() + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = a(kk, i);
            const double* brow = b.data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_rows_serial(const Mat& in, Mat& out) {
    out = Mat(in.rows(), in.cols());
    for (int i = 0; i < in.rows(); ++i)
        softmax_row(in.data() + static_cast<std::size_t>(i) * in.cols(),
                    out.data() + static_cast<std::size_t>(i) * in.cols(), in.cols());
}

void softmax_rows_omp(const Mat& in, Mat& out) {
    out = Mat(in.rows(), in.cols());
    const int m = in.rows(), n = in.cols();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        softmax_row(in.data() + static_cast<std::size_t>(i) * n,
                    out.data() + static_cast<std::size_t>(i) * n, n);
}

void axpy_serial(double s, const Mat& a, Mat& out) {
    assert(a.same_shape(out));
    const std::size_t n = a.size();
    double* o = out.data();
    const double* p = a.data();
    for (std::size_t i = 0; i < n; ++i) o[i] += s * p[i];
}

void axpy_omp(double s, const Mat& a, Mat& out) {
    assert(a.same_shape(out));
    const long long n = static_cast<long long>(a.size());
    double* o = out.data();
    const double* p = a.data();
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) o[i] += s * p[i];
}

Mat matmul(const Mat& a, const Mat& b) {
    Mat out;
    if (product_flops(a, b) >= kParallelFlopCutoff)
        matmul_omp(a, b, out);
    else
        matmul_serial(a, b, out);
    return out;
}

Mat matmul_bt(const Mat& a, const Mat& b) {
    Mat out;
    if (static_cast<long long>(a.rows()) * a.cols() * b.rows() >= kParallelFlopCutoff)
        matmul_bt_omp(a, b, out);
    else
        matmul_bt_serial(a, b, out);
    return out;
}

Mat matmul_at(const Mat& a, const Mat& b) {
    Mat out;
    if (static_cast<long long>(a.cols()) * a.rows() * b.cols() >= kParallelFlopCutoff)
        matmul_at_omp(a, b, out);
    else
        matmul_at_serial(a, b, out);
    return out;
}

Mat softmax_rows(const Mat& in) {
    Mat out;
    if (in.size() >= (1u << 18))
        softmax_rows_omp(in, out);
    else
        softmax_rows_serial(in, out);
    return out;
}

void axpy(double s, const Mat& a, Mat& out) {
    if (a.size() >= (1u << 20))
        axpy_omp(s, a, out);
    else
        axpy_serial(s, a, out);
}

} // namespace gebd::kernels
