#pragma once

#include "pinet/tensor_types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pinet::io {

/// Middlebury .flo magic, stored as a little-endian float.
inline constexpr float kFloMagic = 202021.25f;

/// Encode a single flow [1,2,H,W] (or [2,H,W]) as .flo bytes: magic, width, height,
/// then row-major interleaved (u, v) little-endian floats.
std::vector<std::uint8_t> encode_flo(const torch::Tensor& flow);

/// Decode .flo bytes into a [1,2,H,W] float tensor. Throws ParseError naming the byte offset.
torch::Tensor decode_flo(std::span<const std::uint8_t> bytes);

FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pinet::io
