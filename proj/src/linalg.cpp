#include "snrf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "snrf/rng.hpp"

namespace snrf {
namespace {

// Requires m.rows() >= m.cols(). Returns (U m x n, s, V n x n), unsorted.
struct RawSvd {
    MatrixD u;
    std::vector<double> s;
    MatrixD v;
};

RawSvd one_sided_jacobi(const MatrixD& a, const std::string& label, const SvdOptions& opt) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    MatrixD w = a;
    MatrixD v = MatrixD::identity(n);
    // Columns below this squared norm are rounding noise of a rank-deficient input.
    double total = 0.0;
    for (double x : a.data()) total += x * x;
    const double floor = total * std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon();

    bool converged = false;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if (gamma == 0.0 || std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
                if (alpha <= floor || beta <= floor) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) {
        throw NumericalError("svd of " + label + " did not converge within " + std::to_string(opt.max_sweeps) +
                             " sweeps");
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        sv[j] = std::sqrt(s);
    }
    return {std::move(w), std::move(sv), std::move(v)};
}

// Fills column `j` of `u` with a unit vector orthogonal to columns in `filled`,
// chosen as the most orthogonal standard basis vector.
void complete_column(MatrixD& u, std::size_t j, const std::vector<std::size_t>& filled) {
    const std::size_t m = u.rows();
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < m; ++e) {
        std::vector<double> cand(m, 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t c : filled) {
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += u(i, c) * cand[i];
                for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, c);
            }
        }
        double norm = 0.0;
        for (double x : cand) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > best_norm + 1e-12) {
            best_norm = norm;
            best = std::move(cand);
        }
    }
    for (std::size_t i = 0; i < m; ++i) u(i, j) = best[i] / best_norm;
}

}  // namespace

SvdFactors svd(const MatrixD& m, const std::string& label, const SvdOptions& options) {
    if (m.rows() == 0 || m.cols() == 0) throw ParameterError("svd of " + label + ": empty matrix");
    require_finite(m, label);

    const bool transposed = m.rows() < m.cols();
    const MatrixD a = transposed ? m.transposed() : m;
    RawSvd raw = one_sided_jacobi(a, label, options);

    const std::size_t rows = a.rows();
    const std::size_t k = a.cols();

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return raw.s[x] > raw.s[y]; });

    const double s_max = raw.s[order.front()];
    const double cutoff = static_cast<double>(std::max(rows, k)) * std::numeric_limits<double>::epsilon() * s_max;

    // Left factor of `a` (rows x k) and right factor (k x k).
    MatrixD left(rows, k);
    MatrixD right(k, k);
    std::vector<double> sigma(k);
    std::vector<std::size_t> filled;
    std::vector<std::size_t> pending;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t src = order[j];
        sigma[j] = raw.s[src];
        for (std::size_t i = 0; i < k; ++i) right(i, j) = raw.v(i, src);
        if (sigma[j] > cutoff && sigma[j] > 0.0) {
            for (std::size_t i = 0; i < rows; ++i) left(i, j) = raw.u(i, src) / sigma[j];
            filled.push_back(j);
        } else {
            pending.push_back(j);
        }
    }
    for (std::size_t j : pending) {
        complete_column(left, j, filled);
        filled.push_back(j);
    }

    SvdFactors f;
    f.singular_values = std::move(sigma);
    if (transposed) {
        f.u = std::move(right);
        f.v = std::move(left);
    } else {
        f.u = std::move(left);
        f.v = std::move(right);
    }

    for (std::size_t j = 0; j < k; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < f.u.rows(); ++i) {
            const double mag = std::abs(f.u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (f.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, j) = -f.u(i, j);
            for (std::size_t i = 0; i < f.v.rows(); ++i) f.v(i, j) = -f.v(i, j);
        }
    }
    return f;
}

SvdFactors svd(const Matrix& m, const std::string& label, const SvdOptions& options) {
    return svd(MatrixD::cast_from(m), label, options);
}

MatrixD truncate_rank(const SvdFactors& f, std::size_t r) {
    const std::size_t k = f.rank_capacity();
    if (r == 0 || r > k) {
        throw ParameterError("truncation rank " + std::to_string(r) + " outside [1, " + std::to_string(k) + "]");
    }
    MatrixD out(f.u.rows(), f.v.rows());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < r; ++c) s += f.u(i, c) * f.singular_values[c] * f.v(j, c);
            out(i, j) = s;
        }
    }
    return out;
}

MatrixD reconstruct(const SvdFactors& f) { return truncate_rank(f, f.rank_capacity()); }

std::size_t numerical_rank(const SvdFactors& f) {
    if (f.singular_values.empty()) return 0;
    const double cutoff = static_cast<double>(std::max(f.u.rows(), f.v.rows())) *
                          std::numeric_limits<double>::epsilon() * f.singular_values.front();
    std::size_t r = 0;
    for (double s : f.singular_values) {
        if (s > cutoff) ++r;
    }
    return r;
}

MatrixD least_squares_fit(const MatrixD& basis, const MatrixD& target) {
    if (basis.rows() != target.rows()) throw ParameterError("least_squares_fit: row mismatch");
    const std::size_t r = basis.cols();
    // Normal equations G C = B^T M with G = B^T B, solved by Cholesky.
    MatrixD bt = basis.transposed();
    MatrixD g = matmul(bt, basis);
    MatrixD rhs = matmul(bt, target);
    MatrixD l(r, r);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = g(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
            if (i == j) {
                if (s <= 0.0) throw NumericalError("least_squares_fit: basis is rank deficient");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    MatrixD c(r, target.cols());
    for (std::size_t col = 0; col < target.cols(); ++col) {
        std::vector<double> y(r);
        for (std::size_t i = 0; i < r; ++i) {
            double s = rhs(i, col);
            for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * y[p];
            y[i] = s / l(i, i);
        }
        for (std::size_t ii = r; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t p = ii + 1; p < r; ++p) s -= l(p, ii) * c(p, col);
            c(ii, col) = s / l(ii, ii);
        }
    }
    return c;
}

double best_random_rank_error(const MatrixD& m, std::size_t r, std::size_t candidates, std::uint64_t seed) {
    if (r == 0 || r > std::min(m.rows(), m.cols())) throw ParameterError("best_random_rank_error: bad rank");
    Rng rng(seed);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates; ++c) {
        MatrixD basis(m.rows(), r);
        for (double& x : basis.data()) x = rng.normal();
        MatrixD coef;
        try {
            coef = least_squares_fit(basis, m);
        } catch (const NumericalError&) {
            continue;
        }
        const MatrixD fitted = matmul(basis, coef);
        best = std::min(best, std::sqrt(frobenius_norm_squared(subtract(m, fitted))));
    }
    return best;
}

}  // namespace snrf
