// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/checkpoint.hpp"
#include "pmq/matrix.hpp"
#include "pmq/quant.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pmq {

/// One linear layer with the weight actually used in forward passes. A
/// quantized source is dequantized once, when it is installed.
struct RealizedLayer {
    std::string id;
    Activation activation = Activation::Identity;
    std::variant<Matrix, QuantizedLayer> source;
    Matrix weight;  // realized, d_out x d_in
    std::optional<std::vector<double>> bias;

    [[nodiscard]] bool quantized() const noexcept { return std::holds_alternative<QuantizedLayer>(source); }
    [[nodiscard]] std::size_t d_in() const noexcept { return weight.cols(); }
    [[nodiscard]] std::size_t d_out() const noexcept { return weight.rows(); }
};

class Model {
public:
    Model() = default;
    explicit Model(const Checkpoint& ckpt);

    [[nodiscard]] std::size_t num_layers() const noexcept { return layers_.size(); }
    [[nodiscard]] const RealizedLayer& layer(std::size_t i) const { return layers_.at(i); }
    [[nodiscard]] const ModelManifest& manifest() const noexcept { return manifest_; }

    /// Installs quantized codes for layer i; the bias is kept in full precision.
    void replace_layer(std::size_t i, QuantizedLayer q);

    /// FNV-1a over the realized weight bytes of layers [0, end).
    [[nodiscard]] std::uint64_t prefix_checksum(std::size_t end) const;

    /// Full-precision checkpoint of the realized weights.
    [[nodiscard]] Checkpoint realized_checkpoint() const;

private:
    ModelManifest manifest_;
    std::vector<RealizedLayer> layers_;
};

double gelu(double x) noexcept;

/// act(W x + b) for a single layer.
Matrix propagate_through_layer(const Matrix& x, const RealizedLayer& layer);

/// Output of the whole stack.
Matrix forward(const Model& m, const Matrix& x);

/// Input activation of layer `index` (0-based): x itself for index 0, the
/// output of layers [0, index) otherwise.
Matrix forward_to_layer(const Model& m, const Matrix& x, std::size_t index);

/// Quantized layers go out as `<id>.codes` (packed U8), `<id>.scales` (F32),
/// `<id>.zeros` (I32) with bits/group size in the metadata; full-precision
/// layers as `<id>.weight` in the manifest dtype.
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace pmq
