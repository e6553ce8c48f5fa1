#pragma once

// LSF1 tensor files: "LSF1" magic, u32 little-endian header length, UTF-8 JSON header
// {"dtype":"f32","shape":[...]}, then row-major little-endian float32 payload.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lesyn/imaging.hpp"
#include "lesyn/tensor.hpp"

namespace lesyn::lsf {

struct Array {
    std::vector<std::int64_t> shape;
    std::vector<float> data;
};

std::string encode(std::span<const std::int64_t> shape, std::span<const float> data);
Array decode(std::string_view bytes);

void write(const std::filesystem::path& path, std::span<const std::int64_t> shape, std::span<const float> data);
Array read(const std::filesystem::path& path);

void write_grid(const std::filesystem::path& path, const FloatGrid& g);
FloatGrid read_grid(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);
Mask read_mask(const std::filesystem::path& path);

std::string encode_grid(const FloatGrid& g);
FloatGrid decode_grid(std::string_view bytes);

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t);
/// Reads a 4D tensor; throws IoError if the stored shape differs from `expected`.
template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path, std::array<int, 4> expected);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lesyn::lsf
