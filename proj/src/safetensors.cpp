// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/safetensors.hpp"

#include "pmq/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace pmq::st {

static_assert(std::endian::native == std::endian::little, "tensor payloads are memcpy'd as little-endian");

using nlohmann::json;

std::string_view dtype_name(DType d) noexcept {
    switch (d) {
        case DType::F64: return "F64";
        case DType::F32: return "F32";
        case DType::I32: return "I32";
        case DType::U8: return "U8";
    }
    return "?";
}

DType dtype_from_name(std::string_view name) {
    for (DType d : {DType::F64, DType::F32, DType::I32, DType::U8}) {
        if (name == dtype_name(d)) {
            return d;
        }
    }
    throw ParseError(ParseErrorKind::MalformedHeader, "unsupported dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType d) noexcept {
    switch (d) {
        case DType::F64: return 8;
        case DType::F32: return 4;
        case DType::I32: return 4;
        case DType::U8: return 1;
    }
    return 0;
}

std::size_t Tensor::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
}

const Tensor* TensorFile::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return &t;
        }
    }
    return nullptr;
}

const Tensor& TensorFile::at(std::string_view name) const {
    if (const Tensor* t = find(name)) {
        return *t;
    }
    throw ParseError(ParseErrorKind::MalformedHeader, "missing tensor '" + std::string(name) + "'");
}

std::vector<std::uint8_t> serialize(const TensorFile& file) {
    json header = json::object();
    std::size_t offset = 0;
    for (const auto& t : file.tensors) {
        if (t.bytes.size() != t.numel() * dtype_size(t.dtype)) {
            throw ShapeError("tensor '" + t.name + "' byte length does not match its shape");
        }
        header[t.name] = {{"dtype", dtype_name(t.dtype)},
                          {"shape", t.shape},
                          {"data_offsets", {offset, offset + t.bytes.size()}}};
        offset += t.bytes.size();
    }
    if (!file.metadata.empty()) {
        header["__metadata__"] = file.metadata;
    }
    std::string text = header.dump();
    // Pad with spaces so the payload starts 8-byte aligned.
    while ((text.size() + 8) % 8 != 0) {
        text.push_back(' ');
    }

    std::vector<std::uint8_t> out(8 + text.size() + offset);
    const std::uint64_t n = text.size();
    std::memcpy(out.data(), &n, 8);
    std::memcpy(out.data() + 8, text.data(), text.size());
    std::uint8_t* payload = out.data() + 8 + text.size();
    for (const auto& t : file.tensors) {
        std::memcpy(payload, t.bytes.data(), t.bytes.size());
        payload += t.bytes.size();
    }
    return out;
}

TensorFile parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) {
        throw ParseError(ParseErrorKind::TruncatedPayload, "file shorter than the 8-byte header length");
    }
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data(), 8);
    if (n > bytes.size() - 8) {
        throw ParseError(ParseErrorKind::TruncatedPayload,
                         "header length " + std::to_string(n) + " exceeds file size " + std::to_string(bytes.size()));
    }
    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
    } catch (const json::exception& e) {
        throw ParseError(ParseErrorKind::MalformedHeader, std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) {
        throw ParseError(ParseErrorKind::MalformedHeader, "header is not a JSON object");
    }

    const auto payload = bytes.subspan(8 + n);
    TensorFile file;
    struct Placed {
        std::size_t begin;
        Tensor tensor;
    };
    std::vector<Placed> placed;
    try {
        for (const auto& [name, entry] : header.items()) {
            if (name == "__metadata__") {
                file.metadata = entry.get<std::map<std::string, std::string>>();
                continue;
            }
            Tensor t;
            t.name = name;
            t.dtype = dtype_from_name(entry.at("dtype").get<std::string>());
            t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            for (auto s : t.shape) {
                if (s < 0) {
                    throw ParseError(ParseErrorKind::MalformedHeader, "negative dimension in '" + name + "'");
                }
            }
            const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offsets.size() != 2 || offsets[0] > offsets[1]) {
                throw ParseError(ParseErrorKind::MalformedHeader, "bad data_offsets for '" + name + "'");
            }
            if (offsets[1] > payload.size()) {
                throw ParseError(ParseErrorKind::TruncatedPayload,
                                 "tensor '" + name + "' extends past the end of the file");
            }
            if (offsets[1] - offsets[0] != t.numel() * dtype_size(t.dtype)) {
                throw ParseError(ParseErrorKind::MalformedHeader,
                                 "tensor '" + name + "' byte range does not match shape and dtype");
            }
            t.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(offsets[0]),
                           payload.begin() + static_cast<std::ptrdiff_t>(offsets[1]));
            placed.push_back({static_cast<std::size_t>(offsets[0]), std::move(t)});
        }
    } catch (const json::exception& e) {
        throw ParseError(ParseErrorKind::MalformedHeader, std::string("malformed tensor entry: ") + e.what());
    }
    std::stable_sort(placed.begin(), placed.end(), [](const Placed& a, const Placed& b) { return a.begin < b.begin; });
    for (auto& p : placed) {
        file.tensors.push_back(std::move(p.tensor));
    }
    return file;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to '" + path.string() + "'");
    }
}

void write_file(const std::filesystem::path& path, const TensorFile& file) {
    write_bytes(path, serialize(file));
}

TensorFile read_file(const std::filesystem::path& path) { return parse(read_bytes(path)); }

namespace {

std::vector<std::uint8_t> encode_reals(std::span<const double> v, DType dtype) {
    std::vector<std::uint8_t> out(v.size() * dtype_size(dtype));
    if (dtype == DType::F64) {
        std::memcpy(out.data(), v.data(), out.size());
    } else if (dtype == DType::F32) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto f = static_cast<float>(v[i]);
            std::memcpy(out.data() + 4 * i, &f, 4);
        }
    } else {
        throw ShapeError("real-valued tensors are stored as F32 or F64");
    }
    return out;
}

std::vector<double> decode_reals(const Tensor& t, DType expect) {
    if (t.dtype != expect) {
        throw ParseError(ParseErrorKind::DtypeMismatch, "tensor '" + t.name + "' has dtype " +
                                                            std::string(dtype_name(t.dtype)) + ", expected " +
                                                            std::string(dtype_name(expect)));
    }
    std::vector<double> out(t.numel());
    if (t.dtype == DType::F64) {
        std::memcpy(out.data(), t.bytes.data(), t.bytes.size());
    } else if (t.dtype == DType::F32) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            float f;
            std::memcpy(&f, t.bytes.data() + 4 * i, 4);
            out[i] = f;
        }
    } else {
        throw ParseError(ParseErrorKind::DtypeMismatch, "tensor '" + t.name + "' is not a float tensor");
    }
    for (double v : out) {
        if (!std::isfinite(v)) {
            throw ParseError(ParseErrorKind::MalformedHeader, "tensor '" + t.name + "' holds non-finite values");
        }
    }
    return out;
}

}  // namespace

Tensor from_matrix(std::string name, const Matrix& m, DType dtype) {
    return {std::move(name), dtype,
            {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())},
            encode_reals(m.data(), dtype)};
}

Tensor from_vector(std::string name, std::span<const double> v, DType dtype) {
    return {std::move(name), dtype, {static_cast<std::int64_t>(v.size())}, encode_reals(v, dtype)};
}

Tensor from_bytes(std::string name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> raw) {
    return {std::move(name), DType::U8, std::move(shape), {raw.begin(), raw.end()}};
}

Tensor from_floats(std::string name, std::vector<std::int64_t> shape, std::span<const float> v) {
    Tensor t{std::move(name), DType::F32, std::move(shape), std::vector<std::uint8_t>(v.size() * 4)};
    std::memcpy(t.bytes.data(), v.data(), t.bytes.size());
    return t;
}

Tensor from_ints(std::string name, std::vector<std::int64_t> shape, std::span<const std::int32_t> v) {
    Tensor t{std::move(name), DType::I32, std::move(shape), std::vector<std::uint8_t>(v.size() * 4)};
    std::memcpy(t.bytes.data(), v.data(), t.bytes.size());
    return t;
}

Matrix to_matrix(const Tensor& t, DType expect) {
    if (t.shape.size() != 2) {
        throw ParseError(ParseErrorKind::MalformedHeader, "tensor '" + t.name + "' is not 2-D");
    }
    return {static_cast<std::size_t>(t.shape[0]), static_cast<std::size_t>(t.shape[1]), decode_reals(t, expect)};
}

std::vector<double> to_vector(const Tensor& t, DType expect) {
    if (t.shape.size() != 1) {
        throw ParseError(ParseErrorKind::MalformedHeader, "tensor '" + t.name + "' is not 1-D");
    }
    return decode_reals(t, expect);
}

std::vector<float> to_floats(const Tensor& t) {
    if (t.dtype != DType::F32) {
        throw ParseError(ParseErrorKind::DtypeMismatch, "tensor '" + t.name + "' is not F32");
    }
    std::vector<float> out(t.numel());
    std::memcpy(out.data(), t.bytes.data(), t.bytes.size());
    return out;
}

std::vector<std::int32_t> to_ints(const Tensor& t) {
    if (t.dtype != DType::I32) {
        throw ParseError(ParseErrorKind::DtypeMismatch, "tensor '" + t.name + "' is not I32");
    }
    std::vector<std::int32_t> out(t.numel());
    std::memcpy(out.data(), t.bytes.data(), t.bytes.size());
    return out;
}

}  // namespace pmq::st
