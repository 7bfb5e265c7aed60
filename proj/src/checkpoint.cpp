// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/checkpoint.hpp"

#include "pmq/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace pmq {

using nlohmann::json;

std::string_view activation_name(Activation a) noexcept {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
    }
    return "?";
}

Activation activation_from_name(std::string_view name) {
    for (Activation a : {Activation::Identity, Activation::Relu, Activation::Gelu}) {
        if (name == activation_name(a)) {
            return a;
        }
    }
    throw ParseError(ParseErrorKind::MalformedHeader, "unknown activation '" + std::string(name) + "'");
}

void Checkpoint::validate() const {
    if (layers.size() != manifest.layers.size()) {
        throw ShapeError("checkpoint has " + std::to_string(layers.size()) + " layers, manifest lists " +
                         std::to_string(manifest.layers.size()));
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const auto& s = manifest.layers[i];
        if (l.id != s.id) {
            throw ShapeError("layer " + std::to_string(i) + " id '" + l.id + "' != manifest id '" + s.id + "'");
        }
        if (!seen.insert(l.id).second) {
            throw ShapeError("duplicate layer id '" + l.id + "'");
        }
        if (l.weight.rows() != s.d_out || l.weight.cols() != s.d_in) {
            throw ShapeError("layer '" + l.id + "' weight shape disagrees with manifest");
        }
        if (l.bias.has_value() != s.has_bias || (l.bias && l.bias->size() != s.d_out)) {
            throw ShapeError("layer '" + l.id + "' bias disagrees with manifest");
        }
        if (i > 0 && s.d_in != manifest.layers[i - 1].d_out) {
            throw ShapeError("layer '" + l.id + "' d_in does not chain with the previous layer's d_out");
        }
    }
}

ModelManifest manifest_for(const std::vector<Layer>& layers, const std::vector<Activation>& activations,
                           st::DType dtype) {
    if (activations.size() != layers.size()) {
        throw ShapeError("one activation per layer required");
    }
    ModelManifest m;
    m.dtype = dtype;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        m.layers.push_back({layers[i].id, layers[i].weight.cols(), layers[i].weight.rows(), activations[i],
                            layers[i].bias.has_value()});
    }
    return m;
}

void require_same_architecture(const Checkpoint& a, const Checkpoint& b) {
    if (a.manifest.layers != b.manifest.layers) {
        throw ShapeError("checkpoints do not share one manifest");
    }
}

std::filesystem::path manifest_path(const std::filesystem::path& tensor_path) {
    auto p = tensor_path;
    p.replace_extension(".manifest.json");
    return p;
}

std::string manifest_to_json(const ModelManifest& m) {
    json j;
    j["version"] = m.version;
    j["dtype"] = st::dtype_name(m.dtype);
    j["layers"] = json::array();
    for (const auto& l : m.layers) {
        j["layers"].push_back({{"id", l.id},
                               {"d_in", l.d_in},
                               {"d_out", l.d_out},
                               {"activation", activation_name(l.activation)},
                               {"has_bias", l.has_bias}});
    }
    return j.dump(2) + "\n";
}

ModelManifest manifest_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        ModelManifest m;
        m.version = j.at("version").get<int>();
        m.dtype = st::dtype_from_name(j.at("dtype").get<std::string>());
        if (m.dtype != st::DType::F32 && m.dtype != st::DType::F64) {
            throw ParseError(ParseErrorKind::DtypeMismatch, "manifest dtype must be F32 or F64");
        }
        for (const auto& l : j.at("layers")) {
            m.layers.push_back({l.at("id").get<std::string>(), l.at("d_in").get<std::size_t>(),
                                l.at("d_out").get<std::size_t>(),
                                activation_from_name(l.at("activation").get<std::string>()),
                                l.at("has_bias").get<bool>()});
        }
        return m;
    } catch (const json::exception& e) {
        throw ParseError(ParseErrorKind::MalformedHeader, std::string("malformed manifest: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    c.validate();
    st::TensorFile file;
    for (const auto& l : c.layers) {
        file.tensors.push_back(st::from_matrix(l.id + ".weight", l.weight, c.manifest.dtype));
        if (l.bias) {
            file.tensors.push_back(st::from_vector(l.id + ".bias", *l.bias, c.manifest.dtype));
        }
    }
    st::write_file(path, file);
    const std::string text = manifest_to_json(c.manifest);
    st::write_bytes(manifest_path(path), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto manifest_bytes = st::read_bytes(manifest_path(path));
    Checkpoint c;
    c.manifest = manifest_from_json({reinterpret_cast<const char*>(manifest_bytes.data()), manifest_bytes.size()});
    const st::TensorFile file = st::read_file(path);
    for (const auto& spec : c.manifest.layers) {
        Layer l;
        l.id = spec.id;
        l.weight = st::to_matrix(file.at(spec.id + ".weight"), c.manifest.dtype);
        if (spec.has_bias) {
            l.bias = st::to_vector(file.at(spec.id + ".bias"), c.manifest.dtype);
        }
        c.layers.push_back(std::move(l));
    }
    c.validate();
    return c;
}

}  // namespace pmq
