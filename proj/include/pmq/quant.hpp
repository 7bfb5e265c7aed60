// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pmq {

enum class SolverKind { Rtn, Gptq, Epmq };
/// Which weight the E-PMQ grids are fitted on.
enum class GridSource { Target, Merged };

std::string_view solver_name(SolverKind s) noexcept;
SolverKind solver_from_name(std::string_view name);
std::string_view grid_source_name(GridSource g) noexcept;
GridSource grid_source_from_name(std::string_view name);

struct QuantConfig {
    int bits = 4;
    std::size_t group_size = 128;
    double percdamp = 0.01;
    double alpha = 0.01;
    SolverKind solver = SolverKind::Epmq;
    std::size_t samples_per_task = 256;
    GridSource grid_source = GridSource::Merged;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;

    [[nodiscard]] std::int32_t max_code() const noexcept { return (1 << bits) - 1; }
};

/// Preset used for the LLM-style runs: group size 32, alpha 1.
QuantConfig llm_preset();
/// Anchor strength for mergers that already track the experts closely: alpha 10.
QuantConfig strong_merger_preset();
/// "default", "llm" or "strong_merger".
QuantConfig quant_preset(std::string_view name);

struct GroupGrid {
    double scale = 1.0;  // always exactly representable as float
    std::int32_t zero = 0;
};

/// Asymmetric min-max grid over [min(w, 0), max(w, 0)]. The scale is
/// rounded up to the nearest float so it survives F32 storage unchanged.
GroupGrid fit_grid(std::span<const double> group, int bits);

std::uint8_t quantize_value(double w, const GroupGrid& g, int bits);
double dequantize_value(std::uint8_t code, const GroupGrid& g);

/// Codes for a d_out x d_in weight with one grid per (row, input group).
struct QuantizedLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    int bits = 4;
    std::size_t group_size = 128;
    std::vector<std::uint8_t> codes;  // rows * cols, unpacked
    std::vector<float> scales;        // rows * num_groups()
    std::vector<std::int32_t> zeros;  // rows * num_groups()

    [[nodiscard]] std::size_t num_groups() const noexcept { return (cols + group_size - 1) / group_size; }
    [[nodiscard]] GroupGrid grid(std::size_t row, std::size_t group) const noexcept {
        const std::size_t k = row * num_groups() + group;
        return {static_cast<double>(scales[k]), zeros[k]};
    }
    /// Throws ShapeError/NumericError when buffers or codes violate the layout.
    void validate() const;

    friend bool operator==(const QuantizedLayer&, const QuantizedLayer&) = default;
};

/// Grids for every (row, group) of `source`, codes left zeroed.
QuantizedLayer fit_grids(const Matrix& source, int bits, std::size_t group_size);

/// Quantizes one row of `w` into `q` using the grids already stored in `q`.
void quantize_row(std::span<const double> w, std::size_t row, QuantizedLayer& q);

Matrix dequantize(const QuantizedLayer& q);

QuantizedLayer rtn_quantize(const Matrix& w, const QuantConfig& cfg);

/// Row-major bitstream, lowest bits first, each row padded to a byte.
std::size_t packed_row_bytes(std::size_t cols, int bits) noexcept;
std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, std::size_t rows, std::size_t cols,
                                     int bits);
std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t rows, std::size_t cols,
                                       int bits);

}  // namespace pmq
