// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/matrix.hpp"
#include "pmq/safetensors.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pmq {

enum class Activation { Identity, Relu, Gelu };

std::string_view activation_name(Activation a) noexcept;
Activation activation_from_name(std::string_view name);

struct LayerSpec {
    std::string id;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    Activation activation = Activation::Identity;
    bool has_bias = false;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelManifest {
    int version = 1;
    std::vector<LayerSpec> layers;
    st::DType dtype = st::DType::F64;

    friend bool operator==(const ModelManifest&, const ModelManifest&) = default;
};

struct Layer {
    std::string id;
    Matrix weight;  // d_out x d_in
    std::optional<std::vector<double>> bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Full-precision sequential model weights plus their manifest.
struct Checkpoint {
    std::vector<Layer> layers;
    ModelManifest manifest;

    /// Throws ShapeError when layers disagree with the manifest, ids repeat,
    /// or consecutive layers do not chain.
    void validate() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Manifest with fresh layer specs derived from `layers`.
ModelManifest manifest_for(const std::vector<Layer>& layers, const std::vector<Activation>& activations,
                           st::DType dtype = st::DType::F64);

/// Throws ShapeError unless both checkpoints share one architecture.
void require_same_architecture(const Checkpoint& a, const Checkpoint& b);

/// `dir/model.safetensors` -> `dir/model.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& tensor_path);

std::string manifest_to_json(const ModelManifest& m);
ModelManifest manifest_from_json(std::string_view text);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pmq
