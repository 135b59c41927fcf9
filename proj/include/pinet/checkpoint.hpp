#pragma once

#include "pinet/config.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pinet {

struct CheckpointMeta {
  std::int64_t epoch = 0;         ///< epochs completed
  std::uint64_t config_hash = 0;  ///< fnv1a of config_text
  std::string rng_state;
  std::string config_text;

  bool operator==(const CheckpointMeta&) const = default;
};

/// Binary layout, all integers little-endian:
///   "PINETCKP" u32 version
///   i64 epoch, u64 config_hash, u32 len + rng_state, u32 len + config_text
///   u32 count, then per tensor: u32 len + name, u32 ndim, i64 dims[ndim], f32 values
struct Checkpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;  ///< float32, contiguous
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError naming the byte offset.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Parameters and buffers of `module` in registration order.
Checkpoint capture_checkpoint(torch::nn::Module& module, CheckpointMeta meta);
/// Copies every tensor into the module; names and shapes must match exactly.
void restore_checkpoint(torch::nn::Module& module, const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model described by the checkpoint's config and loads its weights.
std::pair<PINet, RunConfig> load_model(const std::filesystem::path& path);

}  // namespace pinet
