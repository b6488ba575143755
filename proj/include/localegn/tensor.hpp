#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "localegn/errors.hpp"

namespace localegn {

/// Dense row-major matrix of doubles. The only tensor type in the engine;
/// vectors are 1xN or Nx1, scalars 1x1.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("Tensor2: data length " + std::to_string(data_.size()) +
                             " does not match " + shape_str());
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

// ---- dense kernels ------------------------------------------------------
// All kernels accumulate into an already-sized output so backward passes can
// add into existing gradient buffers. Raw-pointer forms operate on row-major
// blocks and back the fused ops.

/// c += a * b on raw row-major blocks (a: m x k, b: k x n, c: m x n)
inline void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double alk = arow[l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += alk * brow[j];
        }
    }
}

/// c += a^T * b, with a stored untransposed (a: r x m, b: r x n, c: m x n)
inline void mm_tn_acc(const double* a, const double* b, double* c, std::size_t r,
                      std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* arow = a + i * m;
        const double* brow = b + i * n;
        for (std::size_t l = 0; l < m; ++l) {
            const double ail = arow[l];
            double* crow = c + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

/// c += a * b
inline void matmul_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
    mm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
}

/// c += a^T * b, with a stored untransposed (a: r x m, b: r x n, c: m x n)
inline void matmul_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
    mm_tn_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
}

/// c += a * b^T via a materialized transpose of b; the direct dot-product
/// loop vectorizes poorly (about 3x slower than the ikj form at these sizes).
inline void matmul_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
    Tensor2 bt(b.cols(), b.rows());
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) bt(j, i) = b(i, j);
    matmul_acc(a, bt, c);
}

inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " times " + b.shape_str());
    Tensor2 c(a.rows(), b.cols());
    matmul_acc(a, b, c);
    return c;
}

inline Tensor2 transposed(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

} // namespace localegn
