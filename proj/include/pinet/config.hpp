#pragma once

#include "pinet/train_eval.hpp"

#include <filesystem>
#include <string>

namespace pinet {

/// Everything a run needs, stored as flat `key = value` lines.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Full-size settings.
RunConfig full_run_config();

/// Small networks on 64x64 synthetic clips, sized for a few hundred CPU iterations.
/// Batches hold one item, so an epoch over `clips` clips is `clips` iterations.
/// `iterations` sets the epoch count; milestones scale proportionally.
RunConfig desk_run_config(int iterations = 300, int clips = 3);

/// Keys in a fixed order; reals use shortest round-trip formatting, lists are comma separated.
std::string render_config(const RunConfig& cfg);

/// Starts from `base` and applies every line. Blank lines and `#` comments are skipped.
/// Throws ConfigError naming the key for unknown keys and bad values.
RunConfig parse_config(const std::string& text, const RunConfig& base = full_run_config());

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = full_run_config());

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace pinet
