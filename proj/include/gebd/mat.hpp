#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace gebd {

// Dense row-major matrix of doubles. Plain value type; all numeric work is
// done by the kernels in kernels.hpp.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
        assert(rows >= 0 && cols >= 0);
    }

    static Mat full(int rows, int cols, double value) {
        Mat m(rows, cols);
        for (auto& x : m.data_) x = value;
        return m;
    }

    static Mat from_rows(int rows, int cols, std::vector<double> values) {
        assert(values.size() == static_cast<std::size_t>(rows) * cols);
        Mat m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.data_ = std::move(values);
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    Mat& operator+=(const Mat& other) {
        assert(rows_ == other.rows_ && cols_ == other.cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    bool same_shape(const Mat& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

} // namespace gebd
