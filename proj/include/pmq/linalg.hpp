// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/matrix.hpp"

#include <span>

namespace pmq {

/// a * b. Each output element accumulates over the inner index in ascending
/// order starting from +0, so results match a naive triple loop exactly.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// x * x^T accumulated one column (sample) at a time, in column order.
/// Adds into `acc` so callers can stream chunks.
void accumulate_gram(const Matrix& x, Matrix& acc);

/// Sum of squares, scalar loop in storage order.
double frobenius_sq(const Matrix& a);
double frobenius_sq(std::span<const double> v);

double trace(const Matrix& a);
double max_abs(const Matrix& a);

/// Largest |h_ij - h_ji| relative to max |h_ij|; 0 for an exactly symmetric matrix.
double asymmetry(const Matrix& h);

/// Lower-triangular L with h = L L^T. Throws SingularError naming the first
/// non-positive pivot.
Matrix cholesky_lower(const Matrix& h);

/// Solves S * h = rhs for S (right division). h must be symmetric positive
/// definite; rows of rhs are independent right-hand sides.
Matrix cholesky_solve(const Matrix& h, const Matrix& rhs);

/// Same as cholesky_solve but reuses a factor from cholesky_lower.
Matrix cholesky_solve_factored(const Matrix& lower, const Matrix& rhs);

/// h^{-1} for symmetric positive definite h.
Matrix spd_inverse(const Matrix& h);

/// h + delta * I
Matrix add_diagonal(const Matrix& h, double delta);

}  // namespace pmq
