#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pinet {

/// Number of pyramid levels used throughout the model.
inline constexpr int kPyramidLevels = 5;

/// Frame sides must be divisible by 2^(kPyramidLevels-1).
inline constexpr int64_t kFrameAlignment = 1 << (kPyramidLevels - 1);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RoutingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_string(const torch::Tensor& t);

/// An RGB image with values in [0,1], stored as a float tensor [3,H,W].
class Frame {
 public:
  /// Rejects wrong rank, channel count, misaligned sides and out-of-range values.
  explicit Frame(torch::Tensor data);

  /// Clamps to [0,1] before validating.
  static Frame clamped(const torch::Tensor& data);

  const torch::Tensor& tensor() const { return data_; }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

  /// [1,3,H,W] view for batched network calls.
  torch::Tensor batched() const { return data_.unsqueeze(0); }

 private:
  torch::Tensor data_;
};

/// Feature map at pyramid level `level` (1 = finest), tensor [N,C,H,W].
class FeatureMap {
 public:
  FeatureMap(torch::Tensor data, int level);

  const torch::Tensor& tensor() const { return data_; }
  int level() const { return level_; }
  int64_t channels() const { return data_.size(1); }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }

 private:
  torch::Tensor data_;
  int level_;
};

/// Displacement field [N,2,H,W] in pixels of its own level; channel 0 is x, channel 1 is y.
class FlowField {
 public:
  FlowField(torch::Tensor data, int level);

  const torch::Tensor& tensor() const { return data_; }
  int level() const { return level_; }
  int64_t height() const { return data_.size(2); }
  int64_t width() const { return data_.size(3); }

 private:
  torch::Tensor data_;
  int level_;
};

/// Batched 2x3 affine matrices [N,2,3] in normalized grid coordinates.
class AffineParams {
 public:
  explicit AffineParams(torch::Tensor theta);

  static AffineParams identity(int64_t batch, torch::TensorOptions options = torch::kFloat32);

  const torch::Tensor& tensor() const { return theta_; }
  int64_t batch() const { return theta_.size(0); }

 private:
  torch::Tensor theta_;
};

}  // namespace pinet
