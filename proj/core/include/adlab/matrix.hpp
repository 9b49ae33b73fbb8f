#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace adlab {

// Row-major dense matrix of doubles. Vectors are represented as n x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

// Four-lane dot product with a fixed summation order. The lane split lets
// the compiler keep independent FMA chains without -ffast-math, and the
// order never varies, so results stay run-to-run identical.
inline double dot_unrolled(const double* __restrict__ a,
                           const double* __restrict__ b, size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        acc0 += a[j] * b[j];
        acc1 += a[j + 1] * b[j + 1];
        acc2 += a[j + 2] * b[j + 2];
        acc3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) acc0 += a[j] * b[j];
    return (acc0 + acc1) + (acc2 + acc3);
}

// y = W x + b     (W: out x in, x: in, b/y: out)
inline void matvec(const Matrix& w, std::span<const double> x,
                   std::span<const double> b, std::span<double> y) {
    assert(w.cols() == x.size() && w.rows() == y.size() && b.size() == y.size());
    const size_t out = w.rows(), in = w.cols();
    const double* wd = w.data();
    for (size_t i = 0; i < out; ++i)
        y[i] = dot_unrolled(wd + i * in, x.data(), in) + b[i];
}

// dx += W^T g
inline void matvec_transposed_accum(const Matrix& w, std::span<const double> g,
                                    std::span<double> dx) {
    assert(w.rows() == g.size() && w.cols() == dx.size());
    const size_t out = w.rows(), in = w.cols();
    const double* __restrict__ wd = w.data();
    double* __restrict__ d = dx.data();
    for (size_t i = 0; i < out; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* __restrict__ row = wd + i * in;
        for (size_t j = 0; j < in; ++j) d[j] += gi * row[j];
    }
}

// dW += g x^T
inline void outer_accum(std::span<const double> g, std::span<const double> x,
                        Matrix& dw) {
    assert(dw.rows() == g.size() && dw.cols() == x.size());
    const size_t out = g.size(), in = x.size();
    double* __restrict__ wd = dw.data();
    const double* __restrict__ xd = x.data();
    for (size_t i = 0; i < out; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* __restrict__ row = wd + i * in;
        for (size_t j = 0; j < in; ++j) row[j] += gi * xd[j];
    }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace adlab
