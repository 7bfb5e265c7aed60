// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pmq::st {

// safetensors layout: u64 little-endian header length N, N bytes of UTF-8
// JSON {name: {dtype, shape, data_offsets: [begin, end]}, "__metadata__": {..}},
// then the raw little-endian payload. Offsets are relative to the payload.

enum class DType { F64, F32, I32, U8 };

std::string_view dtype_name(DType d) noexcept;
DType dtype_from_name(std::string_view name);
std::size_t dtype_size(DType d) noexcept;

struct Tensor {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;

    [[nodiscard]] std::size_t numel() const;
};

struct TensorFile {
    std::vector<Tensor> tensors;  // payload order
    std::map<std::string, std::string> metadata;

    [[nodiscard]] const Tensor& at(std::string_view name) const;
    [[nodiscard]] const Tensor* find(std::string_view name) const;
};

std::vector<std::uint8_t> serialize(const TensorFile& file);
TensorFile parse(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_file(const std::filesystem::path& path);

/// Raw file bytes; shared by readers that need to hash or parse.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Tensor from_matrix(std::string name, const Matrix& m, DType dtype);
Tensor from_vector(std::string name, std::span<const double> v, DType dtype);
Tensor from_bytes(std::string name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> raw);
Tensor from_floats(std::string name, std::vector<std::int64_t> shape, std::span<const float> v);
Tensor from_ints(std::string name, std::vector<std::int64_t> shape, std::span<const std::int32_t> v);

/// 2-D float tensor to Matrix. `expect` guards against dtype drift.
Matrix to_matrix(const Tensor& t, DType expect);
std::vector<double> to_vector(const Tensor& t, DType expect);
std::vector<float> to_floats(const Tensor& t);
std::vector<std::int32_t> to_ints(const Tensor& t);

}  // namespace pmq::st
