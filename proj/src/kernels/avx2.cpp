// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 -mno-fma; only reached after a runtime CPU check.

#include "pmq/kernels.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace pmq::kernels {

const KernelTable& avx2_kernels() noexcept;

namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void add_scalar(double b, double* y, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), vb));
    }
    for (; i < n; ++i) {
        y[i] += b;
    }
}

void relu(double* y, std::size_t n) {
    // max_pd returns the second operand for NaN and for +-0 ties, which
    // matches the scalar "y > 0 ? y : 0" exactly.
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(y + i), zero));
    }
    for (; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

// std::round semantics: truncate, then step away from zero when the exact
// remainder is at least one half.
inline __m256d round_half_away(__m256d v) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d t = _mm256_round_pd(v, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC);
    const __m256d frac = _mm256_andnot_pd(sign_mask, _mm256_sub_pd(v, t));
    const __m256d step = _mm256_or_pd(_mm256_set1_pd(1.0), _mm256_and_pd(sign_mask, v));
    const __m256d need = _mm256_cmp_pd(frac, _mm256_set1_pd(0.5), _CMP_GE_OQ);
    return _mm256_add_pd(t, _mm256_and_pd(need, step));
}

void quantize_row(const double* w, double scale, std::int32_t zero, std::int32_t maxq,
                  std::uint8_t* codes, std::size_t n) {
    const __m256d vscale = _mm256_set1_pd(scale);
    const __m256d vzero = _mm256_set1_pd(static_cast<double>(zero));
    const __m256d lo = _mm256_setzero_pd();
    const __m256d hi = _mm256_set1_pd(static_cast<double>(maxq));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d q = _mm256_add_pd(round_half_away(_mm256_div_pd(_mm256_loadu_pd(w + i), vscale)), vzero);
        q = _mm256_min_pd(_mm256_max_pd(q, lo), hi);
        const __m128i q32 = _mm256_cvttpd_epi32(q);
        alignas(16) std::int32_t tmp[4];
        _mm_store_si128(reinterpret_cast<__m128i*>(tmp), q32);
        for (int k = 0; k < 4; ++k) {
            codes[i + k] = static_cast<std::uint8_t>(tmp[k]);
        }
    }
    for (; i < n; ++i) {
        const double q = std::round(w[i] / scale) + static_cast<double>(zero);
        codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, static_cast<double>(maxq)));
    }
}

void dequantize_row(const std::uint8_t* codes, double scale, std::int32_t zero, double* out,
                    std::size_t n) {
    const __m256d vscale = _mm256_set1_pd(scale);
    const __m256d vzero = _mm256_set1_pd(static_cast<double>(zero));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        std::int32_t packed;
        __builtin_memcpy(&packed, codes + i, 4);
        const __m128i c32 = _mm_cvtepu8_epi32(_mm_cvtsi32_si128(packed));
        const __m256d c = _mm256_cvtepi32_pd(c32);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(vscale, _mm256_sub_pd(c, vzero)));
    }
    for (; i < n; ++i) {
        out[i] = scale * (static_cast<double>(codes[i]) - static_cast<double>(zero));
    }
}

}  // namespace

const KernelTable& avx2_kernels() noexcept {
    static const KernelTable table{Isa::Avx2, axpy, add_scalar, relu, quantize_row, dequantize_row};
    return table;
}

}  // namespace pmq::kernels
