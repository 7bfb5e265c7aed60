// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/model.hpp"

#include "pmq/errors.hpp"
#include "pmq/kernels.hpp"
#include "pmq/linalg.hpp"

#include <cmath>
#include <cstring>

namespace pmq {

Model::Model(const Checkpoint& ckpt) : manifest_(ckpt.manifest) {
    ckpt.validate();
    for (std::size_t i = 0; i < ckpt.layers.size(); ++i) {
        const auto& l = ckpt.layers[i];
        layers_.push_back({l.id, manifest_.layers[i].activation, l.weight, l.weight, l.bias});
    }
}

void Model::replace_layer(std::size_t i, QuantizedLayer q) {
    auto& l = layers_.at(i);
    if (q.rows != l.d_out() || q.cols != l.d_in()) {
        throw ShapeError("replace_layer: quantized shape does not match layer '" + l.id + "'");
    }
    q.validate();
    l.weight = dequantize(q);
    l.source = std::move(q);
}

std::uint64_t Model::prefix_checksum(std::size_t end) const {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < end && i < layers_.size(); ++i) {
        const auto data = layers_[i].weight.data();
        const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
        for (std::size_t b = 0; b < data.size_bytes(); ++b) {
            h ^= bytes[b];
            h *= 1099511628211ull;
        }
    }
    return h;
}

Checkpoint Model::realized_checkpoint() const {
    Checkpoint c;
    c.manifest = manifest_;
    for (const auto& l : layers_) {
        c.layers.push_back({l.id, l.weight, l.bias});
    }
    return c;
}

double gelu(double x) noexcept {
    constexpr double kSqrt2OverPi = 0.7978845608028654;
    constexpr double kCubic = 0.044715;
    return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kCubic * x * x * x)));
}

Matrix propagate_through_layer(const Matrix& x, const RealizedLayer& layer) {
    if (x.rows() != layer.d_in()) {
        throw ShapeError("layer '" + layer.id + "' expects " + std::to_string(layer.d_in()) +
                         " input rows, got " + std::to_string(x.rows()));
    }
    Matrix y = matmul(layer.weight, x);
    const auto& k = kernels::active();
    if (layer.bias) {
        for (std::size_t r = 0; r < y.rows(); ++r) {
            k.add_scalar((*layer.bias)[r], y.row(r).data(), y.cols());
        }
    }
    switch (layer.activation) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            k.relu(y.data().data(), y.size());
            break;
        case Activation::Gelu:
            for (double& v : y.data()) {
                v = gelu(v);
            }
            break;
    }
    return y;
}

Matrix forward_to_layer(const Model& m, const Matrix& x, std::size_t index) {
    if (index >= m.num_layers()) {
        throw ShapeError("forward_to_layer: layer index " + std::to_string(index) + " out of range [0, " +
                         std::to_string(m.num_layers()) + ")");
    }
    if (m.num_layers() > 0 && x.rows() != m.layer(0).d_in()) {
        throw ShapeError("forward: input has " + std::to_string(x.rows()) + " rows, model expects " +
                         std::to_string(m.layer(0).d_in()));
    }
    Matrix h = x;
    for (std::size_t i = 0; i < index; ++i) {
        h = propagate_through_layer(h, m.layer(i));
    }
    return h;
}

Matrix forward(const Model& m, const Matrix& x) {
    if (m.num_layers() == 0) {
        return x;
    }
    const std::size_t last = m.num_layers() - 1;
    return propagate_through_layer(forward_to_layer(m, x, last), m.layer(last));
}

void save_model(const Model& m, const std::filesystem::path& path) {
    st::TensorFile file;
    for (std::size_t i = 0; i < m.num_layers(); ++i) {
        const auto& l = m.layer(i);
        if (const auto* q = std::get_if<QuantizedLayer>(&l.source)) {
            const auto rows = static_cast<std::int64_t>(q->rows);
            const auto groups = static_cast<std::int64_t>(q->num_groups());
            const auto packed = pack_codes(q->codes, q->rows, q->cols, q->bits);
            file.tensors.push_back(st::from_bytes(
                l.id + ".codes", {rows, static_cast<std::int64_t>(packed_row_bytes(q->cols, q->bits))}, packed));
            file.tensors.push_back(st::from_floats(l.id + ".scales", {rows, groups}, q->scales));
            file.tensors.push_back(st::from_ints(l.id + ".zeros", {rows, groups}, q->zeros));
            file.metadata[l.id + ".bits"] = std::to_string(q->bits);
            file.metadata[l.id + ".group_size"] = std::to_string(q->group_size);
        } else {
            file.tensors.push_back(st::from_matrix(l.id + ".weight", std::get<Matrix>(l.source), m.manifest().dtype));
        }
        if (l.bias) {
            file.tensors.push_back(st::from_vector(l.id + ".bias", *l.bias, m.manifest().dtype));
        }
    }
    st::write_file(path, file);
    const std::string text = manifest_to_json(m.manifest());
    st::write_bytes(manifest_path(path), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

namespace {

std::size_t metadata_count(const st::TensorFile& file, const std::string& key) {
    const auto it = file.metadata.find(key);
    if (it == file.metadata.end()) {
        throw ParseError(ParseErrorKind::MalformedHeader, "missing metadata '" + key + "'");
    }
    try {
        return std::stoul(it->second);
    } catch (const std::exception&) {
        throw ParseError(ParseErrorKind::MalformedHeader, "metadata '" + key + "' is not an integer");
    }
}

}  // namespace

Model load_model(const std::filesystem::path& path) {
    const auto manifest_bytes = st::read_bytes(manifest_path(path));
    const ModelManifest manifest =
        manifest_from_json({reinterpret_cast<const char*>(manifest_bytes.data()), manifest_bytes.size()});
    const st::TensorFile file = st::read_file(path);

    // Placeholder weights first so the chain validates, then install codes.
    Checkpoint ckpt;
    ckpt.manifest = manifest;
    std::vector<std::optional<QuantizedLayer>> quantized(manifest.layers.size());
    for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
        const auto& spec = manifest.layers[i];
        Layer l{spec.id, Matrix(spec.d_out, spec.d_in), std::nullopt};
        if (const auto* w = file.find(spec.id + ".weight")) {
            l.weight = st::to_matrix(*w, manifest.dtype);
        } else {
            QuantizedLayer q;
            q.rows = spec.d_out;
            q.cols = spec.d_in;
            q.bits = static_cast<int>(metadata_count(file, spec.id + ".bits"));
            q.group_size = metadata_count(file, spec.id + ".group_size");
            if (q.bits < 1 || q.bits > 8 || q.group_size == 0) {
                throw ParseError(ParseErrorKind::MalformedHeader, "bad quantization attrs for '" + spec.id + "'");
            }
            const auto& codes = file.at(spec.id + ".codes");
            if (codes.dtype != st::DType::U8) {
                throw ParseError(ParseErrorKind::DtypeMismatch, "codes of '" + spec.id + "' must be U8");
            }
            q.codes = unpack_codes(codes.bytes, q.rows, q.cols, q.bits);
            q.scales = st::to_floats(file.at(spec.id + ".scales"));
            q.zeros = st::to_ints(file.at(spec.id + ".zeros"));
            quantized[i] = std::move(q);
        }
        if (spec.has_bias) {
            l.bias = st::to_vector(file.at(spec.id + ".bias"), manifest.dtype);
        }
        ckpt.layers.push_back(std::move(l));
    }
    Model m(ckpt);
    for (std::size_t i = 0; i < quantized.size(); ++i) {
        if (quantized[i]) {
            m.replace_layer(i, std::move(*quantized[i]));
        }
    }
    return m;
}

}  // namespace pmq
