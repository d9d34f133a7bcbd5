#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hbnode/errors.hpp"

namespace hbnode {

using Vec = std::vector<double>;

/// Dense row-major array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    Vec data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, Vec d) : shape(std::move(s)), data(std::move(d)) {
        require_dim(extent_of(shape) == data.size(),
                    "Tensor: shape product " + std::to_string(extent_of(shape)) +
                        " != data length " + std::to_string(data.size()));
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        const auto n = extent_of(s);
        return Tensor(std::move(s), Vec(n, 0.0));
    }

    static Tensor vector(Vec v) {
        const auto n = v.size();
        return Tensor({n}, std::move(v));
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    std::span<const double> view() const noexcept { return data; }
    std::span<double> view() noexcept { return data; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
    }

    static std::size_t extent_of(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }
};

/// Small dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vec data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        require_dim(data_.size() == rows * cols, "Matrix: data length does not match extents");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            require_dim(r.size() == cols_, "Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const Vec& data() const noexcept { return data_; }
    Vec& data() noexcept { return data_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    /// Maximum absolute column sum.
    double norm1() const {
        double best = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
            best = std::max(best, s);
        }
        return best;
    }

    double max_abs() const {
        double best = 0.0;
        for (double x : data_) best = std::max(best, std::abs(x));
        return best;
    }

    Matrix& operator+=(const Matrix& o) {
        require_dim(rows_ == o.rows_ && cols_ == o.cols_, "Matrix +=: extent mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_dim(rows_ == o.rows_ && cols_ == o.cols_, "Matrix -=: extent mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        require_dim(a.cols_ == b.rows_, "Matrix *: inner extent mismatch");
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i)
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
            }
        return c;
    }

    /// y = A x
    Vec apply(std::span<const double> x) const {
        require_dim(x.size() == cols_, "Matrix::apply: extent mismatch");
        Vec y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
            y[i] = s;
        }
        return y;
    }

    /// y = x^T A (row vector times matrix)
    Vec apply_left(std::span<const double> x) const {
        require_dim(x.size() == rows_, "Matrix::apply_left: extent mismatch");
        Vec y(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) y[j] += x[i] * (*this)(i, j);
        return y;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

inline double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

inline double norm_inf(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s = std::max(s, std::abs(v));
    return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    require_dim(a.size() == b.size(), "dot: extent mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace hbnode
