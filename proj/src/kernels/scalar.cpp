// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace pmq::kernels {
namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

void add_scalar(double b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += b;
    }
}

void relu(double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = y[i] > 0.0 ? y[i] : 0.0;
    }
}

void quantize_row(const double* w, double scale, std::int32_t zero, std::int32_t maxq,
                  std::uint8_t* codes, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double q = std::round(w[i] / scale) + static_cast<double>(zero);
        codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, static_cast<double>(maxq)));
    }
}

void dequantize_row(const std::uint8_t* codes, double scale, std::int32_t zero, double* out,
                    std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = scale * (static_cast<double>(codes[i]) - static_cast<double>(zero));
    }
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
    static const KernelTable table{Isa::Scalar, axpy, add_scalar, relu, quantize_row, dequantize_row};
    return table;
}

}  // namespace pmq::kernels
