#pragma once

#include "pinet/data.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace pinet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

/// Runs one command (`train`, `interpolate`, `eval`, `plot`) and returns the exit code.
/// Diagnostics go to `err`, progress to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Clips described by a `--synthetic` value: `default`, or comma separated
/// key=value pairs over clips, length, size, vx, vy, rotation, seed.
std::vector<data::ClipSource> synthetic_clips(const std::string& spec);

/// Parses `all` or a comma separated list; every target must lie in (0, gap).
std::vector<int> parse_targets(const std::string& text, int gap);

}  // namespace pinet::cli
