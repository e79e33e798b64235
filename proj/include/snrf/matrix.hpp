#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "snrf/error.hpp"

namespace snrf {

// Dense row-major matrix. Weights are stored as float; activations and
// decompositions use the double instantiation.
template <class T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{}) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ParameterError("matrix data length " + std::to_string(data_.size()) + " != " +
                                 std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<T> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ParameterError("ragged row in matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return BasicMatrix(r, c, std::move(data));
    }

    static BasicMatrix identity(std::size_t n) {
        BasicMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    template <class U>
    static BasicMatrix cast_from(const BasicMatrix<U>& other) {
        std::vector<T> data(other.data().begin(), other.data().end());
        return BasicMatrix(other.rows(), other.cols(), std::move(data));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    bool all_finite() const noexcept {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    BasicMatrix transposed() const {
        BasicMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

template <class T>
void require_finite(const BasicMatrix<T>& m, const std::string& what) {
    if (!m.all_finite()) throw NumericalError("non-finite entry in " + what);
}

// Product with 64-bit accumulation.
template <class A, class B>
MatrixD matmul(const BasicMatrix<A>& a, const BasicMatrix<B>& b) {
    if (a.cols() != b.rows()) {
        throw ParameterError("matmul shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    MatrixD out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = static_cast<double>(a(i, p));
            if (aip == 0.0) continue;
            auto b_row = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aip * static_cast<double>(b_row[j]);
        }
    }
    return out;
}

// Elementwise helpers in double.
template <class A, class B>
MatrixD subtract(const BasicMatrix<A>& a, const BasicMatrix<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ParameterError("subtract shape mismatch");
    MatrixD out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    return out;
}

template <class A, class B>
MatrixD add(const BasicMatrix<A>& a, const BasicMatrix<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ParameterError("add shape mismatch");
    MatrixD out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<double>(x[i]) + static_cast<double>(y[i]);
    return out;
}

inline MatrixD scaled(const MatrixD& m, double s) {
    MatrixD out = m;
    for (double& v : out.data()) v *= s;
    return out;
}

// Frobenius inner product.
template <class A, class B>
double frobenius_dot(const BasicMatrix<A>& a, const BasicMatrix<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ParameterError("inner product shape mismatch");
    double s = 0.0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return s;
}

}  // namespace snrf
