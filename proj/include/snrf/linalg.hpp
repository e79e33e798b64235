#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snrf/matrix.hpp"

namespace snrf {

struct SvdFactors {
    MatrixD u;                           // m x k, orthonormal columns
    std::vector<double> singular_values;  // non-increasing, length k
    MatrixD v;                           // n x k, orthonormal columns

    std::size_t rank_capacity() const noexcept { return singular_values.size(); }
};

struct SvdOptions {
    int max_sweeps = 100;
    double tolerance = 1e-12;
};

/// Thin SVD by one-sided Jacobi rotations, k = min(m, n).
///
/// Output is deterministic: singular values are sorted descending (stable on
/// ties) and each left singular vector is sign-fixed so that its entry of
/// largest magnitude is non-negative (lowest index wins ties). The matching
/// right vector is flipped with it. `label` names the matrix in errors.
SvdFactors svd(const MatrixD& m, const std::string& label = "matrix", const SvdOptions& options = {});
SvdFactors svd(const Matrix& m, const std::string& label = "matrix", const SvdOptions& options = {});

/// U[:, :r] diag(s[:r]) V[:, :r]^T.
MatrixD truncate_rank(const SvdFactors& f, std::size_t r);

/// Full reconstruction, equivalent to truncate_rank(f, k).
MatrixD reconstruct(const SvdFactors& f);

template <class T>
double frobenius_norm(const BasicMatrix<T>& m) {
    require_finite(m, "frobenius_norm input");
    double s = 0.0;
    for (T v : m.data()) s += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(s);
}

template <class T>
double frobenius_norm_squared(const BasicMatrix<T>& m) {
    double s = 0.0;
    for (T v : m.data()) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

enum class Axis { rows, cols };

/// Keeps the listed rows (or columns) verbatim and writes exact zeros elsewhere.
template <class T>
BasicMatrix<T> mask_to_neurons(const BasicMatrix<T>& m, std::span<const std::size_t> indices, Axis axis) {
    const std::size_t extent = axis == Axis::rows ? m.rows() : m.cols();
    std::vector<char> keep(extent, 0);
    for (std::size_t idx : indices) {
        if (idx >= extent) {
            throw ParameterError("mask index " + std::to_string(idx) + " out of range for extent " +
                                 std::to_string(extent));
        }
        keep[idx] = 1;
    }
    require_finite(m, "mask_to_neurons input");
    BasicMatrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const bool kept = axis == Axis::rows ? keep[i] : keep[j];
            if (kept) out(i, j) = m(i, j);
        }
    }
    return out;
}

/// Numerical rank: number of singular values above max(m,n) * eps * s_max.
std::size_t numerical_rank(const SvdFactors& f);

/// Least-squares coefficients C minimising ||M - B C||_F for a full-column-rank B.
MatrixD least_squares_fit(const MatrixD& basis, const MatrixD& target);

/// Smallest Frobenius error ||M - B C|| over `candidates` random Gaussian
/// m x r factors B, each with C fitted by least squares. Used to check that
/// the truncated SVD is the best rank-r approximation.
double best_random_rank_error(const MatrixD& m, std::size_t r, std::size_t candidates, std::uint64_t seed);

}  // namespace snrf
