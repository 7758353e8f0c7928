#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace hmtc {

// Dense row-major matrix of doubles. Deliberately minimal: the forward and
// backward passes spell out their own loops so that accumulation order is
// fixed and results are reproducible bit-for-bit on a platform class.
class Matrix {
  public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return a_.empty(); }

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return a_[static_cast<size_t>(r) * cols_ + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return a_[static_cast<size_t>(r) * cols_ + c];
    }

    std::span<double> row(int r) { return {a_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const double> row(int r) const {
        return {a_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
    }

    std::vector<double>& data() { return a_; }
    const std::vector<double>& data() const { return a_; }

    void fill(double v) { std::fill(a_.begin(), a_.end(), v); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_; }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> a_;
};

// y = M * x, natural loop order (rows outer, columns inner).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> y) {
    assert(static_cast<int>(x.size()) == m.cols() && static_cast<int>(y.size()) == m.rows());
    for (int r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        auto row = m.row(r);
        for (int c = 0; c < m.cols(); ++c) s += row[c] * x[c];
        y[r] = s;
    }
}

// y += M^T * x.
inline void matvec_transpose_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
    assert(static_cast<int>(x.size()) == m.rows() && static_cast<int>(y.size()) == m.cols());
    for (int r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const double xr = x[r];
        for (int c = 0; c < m.cols(); ++c) y[c] += row[c] * xr;
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

// Least squares min ||A x - b||_2 by Householder QR. A is overwritten-free
// (copied internally); A must have rows >= cols and full column rank for a
// meaningful answer. Used by the spline coefficient fits, where systems are
// tiny (tens of columns).
std::vector<double> least_squares(const Matrix& a, const std::vector<double>& b);

} // namespace hmtc
