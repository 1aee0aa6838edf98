#pragma once

#include "gebd/mat.hpp"

namespace gebd::kernels {

// Every kernel has a serial reference and an OpenMP variant. The OpenMP
// variants assign each output row to exactly one thread and keep the inner
// accumulation order identical to the serial code, so both produce
// bit-identical results for any thread count.

// out = a * b
void matmul_serial(const Mat& a, const Mat& b, Mat& out);
void matmul_omp(const Mat& a, const Mat& b, Mat& out);

// out = a * b^T
void matmul_bt_serial(const Mat& a, const Mat& b, Mat& out);
void matmul_bt_omp(const Mat& a, const Mat& b, Mat& out);

// out = a^T * b
void matmul_at_serial(const Mat& a, const Mat& b, Mat& out);
void matmul_at_omp(const Mat& a, const Mat& b, Mat& out);

// Row-wise softmax (max-shifted).
void softmax_rows_serial(const Mat& in, Mat& out);
void softmax_rows_omp(const Mat& in, Mat& out);

// out += s * a
void axpy_serial(double s, const Mat& a, Mat& out);
void axpy_omp(double s, const Mat& a, Mat& out);

// Dispatching entry points: pick the OpenMP variant when the work is large
// enough to amortize the fork, the serial one otherwise. Same results either
// way.
Mat matmul(const Mat& a, const Mat& b);
Mat matmul_bt(const Mat& a, const Mat& b);
Mat matmul_at(const Mat& a, const Mat& b);
Mat softmax_rows(const Mat& in);
void axpy(double s, const Mat& a, Mat& out);

} // namespace gebd::kernels
