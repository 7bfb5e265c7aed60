// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/linalg.hpp"

#include "pmq/errors.hpp"
#include "pmq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pmq {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    const auto& k = kernels::active();
    Matrix c(a.rows(), b.cols());
    // i-k-j order: every c(i, j) sees its k terms in ascending k.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.row(i).data();
        for (std::size_t kk = 0; kk < a.cols(); ++kk) {
            k.axpy(a(i, kk), b.row(kk).data(), crow, b.cols());
        }
    }
    return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: inner dimension mismatch");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto br = b.row(j);
            double s = 0.0;
            for (std::size_t kk = 0; kk < ar.size(); ++kk) {
                s += ar[kk] * br[kk];
            }
            c(i, j) = s;
        }
    }
    return c;
}

void accumulate_gram(const Matrix& x, Matrix& acc) {
    const std::size_t d = x.rows();
    if (acc.rows() != d || acc.cols() != d) {
        throw ShapeError("accumulate_gram: accumulator is not " + std::to_string(d) + "x" +
                         std::to_string(d));
    }
    const auto& k = kernels::active();
    std::vector<double> col(d);
    for (std::size_t n = 0; n < x.cols(); ++n) {
        for (std::size_t r = 0; r < d; ++r) {
            col[r] = x(r, n);
        }
        for (std::size_t r = 0; r < d; ++r) {
            k.axpy(col[r], col.data(), acc.row(r).data(), d);
        }
    }
}

double frobenius_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return s;
}

double frobenius_sq(const Matrix& a) { return frobenius_sq(a.data()); }

double trace(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i) {
        s += a(i, i);
    }
    return s;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

double asymmetry(const Matrix& h) {
    if (h.rows() != h.cols()) {
        throw ShapeError("asymmetry: matrix is not square");
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        for (std::size_t j = i + 1; j < h.cols(); ++j) {
            diff = std::max(diff, std::abs(h(i, j) - h(j, i)));
        }
    }
    const double scale = max_abs(h);
    return scale > 0.0 ? diff / scale : diff;
}

Matrix cholesky_lower(const Matrix& h) {
    if (h.rows() != h.cols()) {
        throw ShapeError("cholesky: matrix is not square");
    }
    if (!h.all_finite()) {
        throw NumericError("cholesky: non-finite entries");
    }
    if (asymmetry(h) > 1e-9) {
        throw NumericError("cholesky: matrix is not symmetric");
    }
    const std::size_t n = h.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = h(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            diag -= l(j, k) * l(j, k);
        }
        if (!(diag > 0.0)) {
            throw SingularError(j, "cholesky: non-positive pivot " + std::to_string(diag) +
                                       " at index " + std::to_string(j));
        }
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = h(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= l(i, k) * l(j, k);
            }
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Matrix cholesky_solve_factored(const Matrix& lower, const Matrix& rhs) {
    const std::size_t n = lower.rows();
    if (rhs.cols() != n) {
        throw ShapeError("cholesky_solve: rhs has " + std::to_string(rhs.cols()) +
                         " columns, factor is " + std::to_string(n));
    }
    // S h = R with h symmetric  <=>  L L^T s^T = r^T for every row.
    Matrix s = rhs;
    std::vector<double> y(n);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        auto row = s.row(r);
        for (std::size_t i = 0; i < n; ++i) {
            double v = row[i];
            for (std::size_t k = 0; k < i; ++k) {
                v -= lower(i, k) * y[k];
            }
            y[i] = v / lower(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double v = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) {
                v -= lower(k, ii) * row[k];
            }
            row[ii] = v / lower(ii, ii);
        }
    }
    return s;
}

Matrix cholesky_solve(const Matrix& h, const Matrix& rhs) {
    return cholesky_solve_factored(cholesky_lower(h), rhs);
}

Matrix spd_inverse(const Matrix& h) {
    Matrix inv = cholesky_solve(h, Matrix::identity(h.rows()));
    // Symmetrize away the rounding asymmetry.
    for (std::size_t i = 0; i < inv.rows(); ++i) {
        for (std::size_t j = i + 1; j < inv.cols(); ++j) {
            const double m = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = m;
            inv(j, i) = m;
        }
    }
    return inv;
}

Matrix add_diagonal(const Matrix& h, double delta) {
    Matrix out = h;
    for (std::size_t i = 0; i < std::min(out.rows(), out.cols()); ++i) {
        out(i, i) += delta;
    }
    return out;
}

}  // namespace pmq
