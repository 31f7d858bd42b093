#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace slm {

// Dense row-major matrix of doubles. All model math runs in 64-bit so that
// finite-difference gradient checks are meaningful.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, double fill) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double & operator()(int i, int j) {
        assert(i >= 0 && i < rows && j >= 0 && j < cols);
        return data[static_cast<size_t>(i) * cols + j];
    }
    double operator()(int i, int j) const {
        assert(i >= 0 && i < rows && j >= 0 && j < cols);
        return data[static_cast<size_t>(i) * cols + j];
    }

    double * row_ptr(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double * row_ptr(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool same_shape(const Mat & other) const {
        return rows == other.rows && cols == other.cols;
    }
};

namespace kernels {

// Serial reference kernels. Kept deliberately straightforward; the OpenMP
// versions below must match them bit for bit.
namespace serial {

// C = A * B
void matmul(const Mat & a, const Mat & b, Mat & c);
// C = A * B^T
void matmul_nt(const Mat & a, const Mat & b, Mat & c);
// C = A^T * B
void matmul_tn(const Mat & a, const Mat & b, Mat & c);

} // namespace serial

// OpenMP kernels. Each output row is owned by one thread and the inner
// accumulation order is identical to the serial kernel, so results are
// bit-identical and runs stay deterministic.
void matmul(const Mat & a, const Mat & b, Mat & c);
void matmul_nt(const Mat & a, const Mat & b, Mat & c);
void matmul_tn(const Mat & a, const Mat & b, Mat & c);

} // namespace kernels

} // namespace slm
