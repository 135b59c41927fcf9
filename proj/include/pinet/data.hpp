#pragma once

#include "pinet/tensor_types.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pinet::data {

inline constexpr int kMinClipLength = 9;
inline constexpr int kMaxClipLength = 31;

struct Clip {
  std::vector<Frame> frames;
  std::string id;
  double fps = 240.0;

  int length() const { return static_cast<int>(frames.size()); }
  /// Length in [9,31] and a single frame size.
  void validate() const;
};

/// Lookup of exact or precomputed flows at full resolution. flow(a, b) is
/// f_{a->b}: backwarp(frame_b, f_{a->b}) reproduces frame_a.
class FlowOracle {
 public:
  virtual ~FlowOracle() = default;
  virtual FlowField flow(int src, int dst) const = 0;
};

/// Reads `<dir>/<src>_<dst>.flo` on demand.
class FileFlowOracle final : public FlowOracle {
 public:
  explicit FileFlowOracle(std::filesystem::path dir);
  FlowField flow(int src, int dst) const override;
  static std::filesystem::path file_name(int src, int dst);

 private:
  std::filesystem::path dir_;
};

// Synthetic clips ------------------------------------------------------------

struct SyntheticPatch {
  int size = 12;           ///< side length in pixels
  double x = 0.0, y = 0.0;  ///< center at frame 0
  double vx = 0.0, vy = 0.0;
};

/// A windowed procedural texture over a flat surround, moved by a global
/// rigid motion, with an optional independently moving square patch.
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  double vx = 1.0;  ///< global velocity, px/frame
  double vy = 0.0;
  double rotation = 0.0;  ///< rad/frame about the frame center
  int margin = 4;         ///< distance kept between textured content and the border
  std::optional<SyntheticPatch> patch;
};

class SyntheticFlowOracle final : public FlowOracle {
 public:
  SyntheticFlowOracle(SyntheticSpec spec, int length);
  FlowField flow(int src, int dst) const override;

 private:
  SyntheticSpec spec_;
  int length_;
};

/// Renders `length` frames and returns the matching exact flow oracle.
/// Throws std::domain_error when textured content or the patch would leave the frame.
std::pair<Clip, std::shared_ptr<SyntheticFlowOracle>> generate_synthetic_clip(const SyntheticSpec& spec, int length);

// Training items ---------------------------------------------------------------

struct SamplingConfig {
  int resize_width = 448;
  int resize_height = 256;
  int crop_width = 256;
  int crop_height = 256;

  void validate() const;
  bool operator==(const SamplingConfig&) const = default;
};

/// Mapping from clip resolution to item resolution (resize then crop).
struct CropGeometry {
  int source_width = 0, source_height = 0;
  int resize_width = 0, resize_height = 0;
  int offset_x = 0, offset_y = 0;
  int crop_width = 0, crop_height = 0;

  torch::Tensor apply_to_frame(const torch::Tensor& frame) const;  ///< [3,H,W]
  torch::Tensor apply_to_flow(const torch::Tensor& flow) const;    ///< [1,2,H,W], rescales displacements
};

struct TrainingItem {
  Frame first;
  Frame last;
  std::vector<Frame> intermediates;  ///< n - 1 frames, timestamps 1..n-1
  int n = 0;
  CropGeometry geometry;
  std::shared_ptr<const FlowOracle> oracle;

  /// Ground truth at timestamp 0..n.
  const Frame& at(int t) const;
  /// Oracle flow in item coordinates, or nullopt without an oracle.
  std::optional<FlowField> oracle_flow(int src, int dst) const;
};

/// Uses the whole clip as one item (n = L - 1); frames are resized and cropped
/// with one seeded offset shared by the whole item.
TrainingItem sample_training_item(const Clip& clip, std::uint64_t seed, const SamplingConfig& cfg,
                                  std::shared_ptr<const FlowOracle> oracle = nullptr);

// Disk layout --------------------------------------------------------------------

Frame read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Frame& frame);

std::string frame_file_name(int index);

/// `<dir>/%06d.png`, frames in numeric order.
Clip load_clip(const std::filesystem::path& dir);
void save_clip(const std::filesystem::path& dir, const Clip& clip);

struct ClipSource {
  Clip clip;
  std::shared_ptr<const FlowOracle> oracle;
};

/// Every subdirectory of `root` holding frames, sorted by name. A clip gets a
/// file-backed oracle when its directory contains .flo files.
std::vector<ClipSource> load_clip_root(const std::filesystem::path& root);

}  // namespace pinet::data
