// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/quant.hpp"

#include "pmq/errors.hpp"
#include "pmq/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pmq {

std::string_view solver_name(SolverKind s) noexcept {
    switch (s) {
        case SolverKind::Rtn: return "rtn";
        case SolverKind::Gptq: return "gptq";
        case SolverKind::Epmq: return "epmq";
    }
    return "?";
}

SolverKind solver_from_name(std::string_view name) {
    for (SolverKind s : {SolverKind::Rtn, SolverKind::Gptq, SolverKind::Epmq}) {
        if (name == solver_name(s)) {
            return s;
        }
    }
    throw ConfigError("unknown solver '" + std::string(name) + "' (expected rtn, gptq or epmq)");
}

std::string_view grid_source_name(GridSource g) noexcept {
    return g == GridSource::Target ? "target" : "merged";
}

GridSource grid_source_from_name(std::string_view name) {
    if (name == "target") {
        return GridSource::Target;
    }
    if (name == "merged") {
        return GridSource::Merged;
    }
    throw ConfigError("unknown grid_source '" + std::string(name) + "' (expected target or merged)");
}

void QuantConfig::validate() const {
    if (bits < 2 || bits > 8) {
        throw ConfigError("bits must be in [2, 8], got " + std::to_string(bits));
    }
    if (group_size == 0) {
        throw ConfigError("group_size must be positive");
    }
    if (solver != SolverKind::Rtn && !(percdamp > 0.0)) {
        throw ConfigError("percdamp must be > 0 for calibrated solvers");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("alpha must be finite and >= 0");
    }
    if (samples_per_task == 0) {
        throw ConfigError("samples_per_task must be positive");
    }
}

QuantConfig llm_preset() {
    QuantConfig c;
    c.group_size = 32;
    c.alpha = 1.0;
    return c;
}

QuantConfig strong_merger_preset() {
    QuantConfig c;
    c.alpha = 10.0;
    return c;
}

QuantConfig quant_preset(std::string_view name) {
    if (name == "default") {
        return {};
    }
    if (name == "llm") {
        return llm_preset();
    }
    if (name == "strong_merger") {
        return strong_merger_preset();
    }
    throw ConfigError("unknown quant preset '" + std::string(name) + "' (expected default, llm or strong_merger)");
}

GroupGrid fit_grid(std::span<const double> group, int bits) {
    if (group.empty()) {
        throw ShapeError("fit_grid: empty group");
    }
    double lo = 0.0;
    double hi = 0.0;
    for (double w : group) {
        if (!std::isfinite(w)) {
            throw NumericError("fit_grid: non-finite weight");
        }
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    const auto maxq = static_cast<double>((1 << bits) - 1);
    GroupGrid g;
    if (hi > lo) {
        const double exact = (hi - lo) / maxq;
        float s = static_cast<float>(exact);
        if (static_cast<double>(s) < exact) {
            s = std::nextafter(s, std::numeric_limits<float>::infinity());
        }
        if (!(s > 0.0f) || !std::isfinite(s)) {
            throw NumericError("fit_grid: range not representable as an F32 scale");
        }
        g.scale = s;
    }
    g.zero = static_cast<std::int32_t>(std::clamp(std::round(-lo / g.scale), 0.0, maxq));
    return g;
}

std::uint8_t quantize_value(double w, const GroupGrid& g, int bits) {
    const double q = std::round(w / g.scale) + static_cast<double>(g.zero);
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, static_cast<double>((1 << bits) - 1)));
}

double dequantize_value(std::uint8_t code, const GroupGrid& g) {
    return g.scale * (static_cast<double>(code) - static_cast<double>(g.zero));
}

void QuantizedLayer::validate() const {
    if (bits < 2 || bits > 8 || group_size == 0) {
        throw ShapeError("quantized layer: bad bits/group_size");
    }
    if (codes.size() != rows * cols || scales.size() != rows * num_groups() || zeros.size() != rows * num_groups()) {
        throw ShapeError("quantized layer: buffer sizes disagree with shape");
    }
    const auto maxq = static_cast<std::uint8_t>((1 << bits) - 1);
    for (auto c : codes) {
        if (c > maxq) {
            throw NumericError("quantized layer: code exceeds 2^bits - 1");
        }
    }
    for (float s : scales) {
        if (!(s > 0.0f) || !std::isfinite(s)) {
            throw NumericError("quantized layer: scale must be finite and positive");
        }
    }
}

QuantizedLayer fit_grids(const Matrix& source, int bits, std::size_t group_size) {
    QuantizedLayer q;
    q.rows = source.rows();
    q.cols = source.cols();
    q.bits = bits;
    q.group_size = group_size;
    q.codes.assign(q.rows * q.cols, 0);
    q.scales.reserve(q.rows * q.num_groups());
    q.zeros.reserve(q.rows * q.num_groups());
    for (std::size_t r = 0; r < q.rows; ++r) {
        const auto row = source.row(r);
        for (std::size_t g = 0; g < q.num_groups(); ++g) {
            const std::size_t begin = g * group_size;
            const std::size_t len = std::min(group_size, q.cols - begin);
            const GroupGrid grid = fit_grid(row.subspan(begin, len), bits);
            q.scales.push_back(static_cast<float>(grid.scale));
            q.zeros.push_back(grid.zero);
        }
    }
    return q;
}

void quantize_row(std::span<const double> w, std::size_t row, QuantizedLayer& q) {
    const auto& k = kernels::active();
    std::uint8_t* out = q.codes.data() + row * q.cols;
    for (std::size_t g = 0; g < q.num_groups(); ++g) {
        const std::size_t begin = g * q.group_size;
        const std::size_t len = std::min(q.group_size, q.cols - begin);
        const GroupGrid grid = q.grid(row, g);
        k.quantize_row(w.data() + begin, grid.scale, grid.zero, (1 << q.bits) - 1,
                       out + begin, len);
    }
}

Matrix dequantize(const QuantizedLayer& q) {
    const auto& k = kernels::active();
    Matrix w(q.rows, q.cols);
    for (std::size_t r = 0; r < q.rows; ++r) {
        for (std::size_t g = 0; g < q.num_groups(); ++g) {
            const std::size_t begin = g * q.group_size;
            const std::size_t len = std::min(q.group_size, q.cols - begin);
            const GroupGrid grid = q.grid(r, g);
            k.dequantize_row(q.codes.data() + r * q.cols + begin, grid.scale, grid.zero,
                             w.row(r).data() + begin, len);
        }
    }
    return w;
}

QuantizedLayer rtn_quantize(const Matrix& w, const QuantConfig& cfg) {
    QuantizedLayer q = fit_grids(w, cfg.bits, cfg.group_size);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        quantize_row(w.row(r), r, q);
    }
    return q;
}

std::size_t packed_row_bytes(std::size_t cols, int bits) noexcept {
    return (cols * static_cast<std::size_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, std::size_t rows, std::size_t cols,
                                     int bits) {
    if (bits < 1 || bits > 8) {
        throw ShapeError("pack_codes: bits must be in [1, 8]");
    }
    if (codes.size() != rows * cols) {
        throw ShapeError("pack_codes: code count does not match shape");
    }
    const std::size_t stride = packed_row_bytes(cols, bits);
    std::vector<std::uint8_t> out(rows * stride, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::uint8_t* dst = out.data() + r * stride;
        std::size_t bit = 0;
        for (std::size_t c = 0; c < cols; ++c, bit += static_cast<std::size_t>(bits)) {
            const unsigned v = codes[r * cols + c];
            if (v >> bits) {
                throw ShapeError("pack_codes: code " + std::to_string(v) + " does not fit in " +
                                 std::to_string(bits) + " bits");
            }
            const std::size_t byte = bit / 8;
            const unsigned shift = bit % 8;
            dst[byte] = static_cast<std::uint8_t>(dst[byte] | (v << shift));
            if (shift + static_cast<unsigned>(bits) > 8) {
                dst[byte + 1] = static_cast<std::uint8_t>(dst[byte + 1] | (v >> (8 - shift)));
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> packed, std::size_t rows, std::size_t cols,
                                       int bits) {
    if (bits < 1 || bits > 8) {
        throw ShapeError("unpack_codes: bits must be in [1, 8]");
    }
    const std::size_t stride = packed_row_bytes(cols, bits);
    if (packed.size() != rows * stride) {
        throw ParseError(ParseErrorKind::PayloadLength, "packed codes: expected " + std::to_string(rows * stride) +
                                                            " bytes, got " + std::to_string(packed.size()));
    }
    const unsigned mask = (1u << bits) - 1u;
    std::vector<std::uint8_t> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint8_t* src = packed.data() + r * stride;
        std::size_t bit = 0;
        for (std::size_t c = 0; c < cols; ++c, bit += static_cast<std::size_t>(bits)) {
            const std::size_t byte = bit / 8;
            const unsigned shift = bit % 8;
            unsigned v = static_cast<unsigned>(src[byte]) >> shift;
            if (shift + static_cast<unsigned>(bits) > 8) {
                v |= static_cast<unsigned>(src[byte + 1]) << (8 - shift);
            }
            out[r * cols + c] = static_cast<std::uint8_t>(v & mask);
        }
    }
    return out;
}

}  // namespace pmq
