// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace pmq::kernels {

// Element-wise inner loops. Every variant performs the same IEEE operations
// in the same order per element (no FMA, no reassociation), so results are
// bit-identical across ISAs. No reductions here.

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
    Isa isa;
    /// y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    /// y[i] += b
    void (*add_scalar)(double b, double* y, std::size_t n);
    /// y[i] = y[i] > 0 ? y[i] : 0
    void (*relu)(double* y, std::size_t n);
    /// codes[i] = clamp(round_half_away(w[i] / scale) + zero, 0, maxq)
    void (*quantize_row)(const double* w, double scale, std::int32_t zero, std::int32_t maxq,
                         std::uint8_t* codes, std::size_t n);
    /// out[i] = scale * (codes[i] - zero)
    void (*dequantize_row)(const std::uint8_t* codes, double scale, std::int32_t zero, double* out,
                           std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the ISA was not compiled in or the CPU lacks it.
const KernelTable* kernels_for(Isa isa) noexcept;

/// Best table for this CPU, chosen once. PMQ_KERNELS=scalar|avx2|neon
/// overrides the choice when the requested ISA is usable.
const KernelTable& active() noexcept;

std::string_view isa_name(Isa isa) noexcept;

}  // namespace pmq::kernels
