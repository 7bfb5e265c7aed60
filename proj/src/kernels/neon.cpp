// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

// AArch64 only. Two doubles per lane group; vmulq/vaddq kept separate so
// the result never contracts into an FMA.

#include "pmq/kernels.hpp"

#include <arm_neon.h>

#include <algorithm>
#include <cmath>

namespace pmq::kernels {

const KernelTable& neon_kernels() noexcept;

namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void add_scalar(double b, double* y, std::size_t n) {
    const float64x2_t vb = vdupq_n_f64(b);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vb));
    }
    for (; i < n; ++i) {
        y[i] += b;
    }
}

void relu(double* y, std::size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t v = vld1q_f64(y + i);
        // select v where v > 0, else +0 (NaN compares false)
        vst1q_f64(y + i, vbslq_f64(vcgtq_f64(v, zero), v, zero));
    }
    for (; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

void quantize_row(const double* w, double scale, std::int32_t zero, std::int32_t maxq,
                  std::uint8_t* codes, std::size_t n) {
    const float64x2_t vscale = vdupq_n_f64(scale);
    const float64x2_t vzero = vdupq_n_f64(static_cast<double>(zero));
    const float64x2_t lo = vdupq_n_f64(0.0);
    const float64x2_t hi = vdupq_n_f64(static_cast<double>(maxq));
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        // vrndaq: round to nearest, ties away from zero
        float64x2_t q = vaddq_f64(vrndaq_f64(vdivq_f64(vld1q_f64(w + i), vscale)), vzero);
        q = vminq_f64(vmaxq_f64(q, lo), hi);
        codes[i] = static_cast<std::uint8_t>(vgetq_lane_f64(q, 0));
        codes[i + 1] = static_cast<std::uint8_t>(vgetq_lane_f64(q, 1));
    }
    for (; i < n; ++i) {
        const double q = std::round(w[i] / scale) + static_cast<double>(zero);
        codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, static_cast<double>(maxq)));
    }
}

void dequantize_row(const std::uint8_t* codes, double scale, std::int32_t zero, double* out,
                    std::size_t n) {
    const float64x2_t vscale = vdupq_n_f64(scale);
    const float64x2_t vzero = vdupq_n_f64(static_cast<double>(zero));
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const double pair[2] = {static_cast<double>(codes[i]), static_cast<double>(codes[i + 1])};
        vst1q_f64(out + i, vmulq_f64(vscale, vsubq_f64(vld1q_f64(pair), vzero)));
    }
    for (; i < n; ++i) {
        out[i] = scale * (static_cast<double>(codes[i]) - static_cast<double>(zero));
    }
}

}  // namespace

const KernelTable& neon_kernels() noexcept {
    static const KernelTable table{Isa::Neon, axpy, add_scalar, relu, quantize_row, dequantize_row};
    return table;
}

}  // namespace pmq::kernels
