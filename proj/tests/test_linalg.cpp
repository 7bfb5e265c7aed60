// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/errors.hpp"
#include "pmq/linalg.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

using namespace pmq;
using pmq::test::Rng;

TEST_CASE("matmul hand cases", "[linalg]") {
    const Matrix a{{1, 2}, {3, 4}};
    CHECK(matmul(Matrix::identity(2), a) == a);
    CHECK(matmul(a, Matrix::identity(2)) == a);
    CHECK(matmul(a, Matrix{{1}, {1}}) == Matrix{{3}, {7}});
    CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), ShapeError);
}

TEST_CASE("matmul equals the triple loop bit-for-bit", "[linalg]") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix a = test::random_matrix(rng, 5, 7);
        const Matrix b = test::random_matrix(rng, 7, 3 + rep % 9);
        CHECK(matmul(a, b) == test::naive_matmul(a, b));
    }
}

TEST_CASE("matmul_transposed and gram agree with explicit products", "[linalg]") {
    Rng rng(12);
    const Matrix a = test::random_matrix(rng, 4, 9);
    const Matrix b = test::random_matrix(rng, 6, 9);
    CHECK(matmul_transposed(a, b) == test::naive_matmul(a, b.transpose()));

    Matrix h(4, 4);
    accumulate_gram(a, h);
    CHECK(test::rel_err(h, test::naive_matmul(a, a.transpose())) < 1e-14);
    CHECK(asymmetry(h) == 0.0);
}

TEST_CASE("frobenius_sq", "[linalg]") {
    CHECK(frobenius_sq(Matrix(3, 3)) == 0.0);
    CHECK(frobenius_sq(Matrix{{3, 4}}) == 25.0);
    Rng rng(13);
    const Matrix a = test::random_matrix(rng, 4, 4);
    double s = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            s += a(r, c) * a(r, c);
        }
    }
    CHECK(frobenius_sq(a) == s);
}

TEST_CASE("cholesky_solve hand cases", "[linalg]") {
    const Matrix r{{1, -2, 3}, {0.5, 4, 9}};
    CHECK(cholesky_solve(Matrix::identity(3), r) == r);
    CHECK(max_abs_diff(cholesky_solve(2.0 * Matrix::identity(3), Matrix{{2, 4, 6}}), Matrix{{1, 2, 3}}) <= 1e-15);
}

TEST_CASE("cholesky_solve matches the Gauss-Jordan inverse", "[linalg]") {
    Rng rng(14);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix h = test::random_spd(rng, 6);
        const Matrix rhs = test::random_matrix(rng, 3, 6);
        const Matrix oracle = test::naive_matmul(rhs, test::gauss_jordan_inverse(h));
        CHECK(test::rel_err(cholesky_solve(h, rhs), oracle) < 1e-10);
    }
}

TEST_CASE("cholesky_solve residual bound on random SPD", "[linalg][property]") {
    Rng rng(15);
    std::uniform_int_distribution<std::size_t> dim(1, 32);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t d = dim(rng);
        const Matrix h = test::random_spd(rng, d);
        const Matrix rhs = test::random_matrix(rng, 1 + rep % 4, d);
        const Matrix s = cholesky_solve(h, rhs);
        const double resid = test::frob(test::naive_matmul(s, h) - rhs);
        REQUIRE(resid <= 1e-8 * (1.0 + test::frob(rhs)));
    }
}

TEST_CASE("cholesky reports the failing pivot", "[linalg]") {
    const Matrix h{{4, 2, 0}, {2, 1, 0}, {0, 0, 1}};  // rank deficient at index 1
    try {
        (void)cholesky_lower(h);
        FAIL("expected SingularError");
    } catch (const SingularError& e) {
        CHECK(e.pivot() == 1);
    }
    CHECK_THROWS_AS(cholesky_lower(Matrix{{1, 2}, {0, 1}}), NumericError);
}
