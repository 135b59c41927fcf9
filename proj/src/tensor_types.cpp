#include "pinet/tensor_types.hpp"

#include <sstream>

namespace pinet {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << '[';
  for (int64_t d = 0; d < t.dim(); ++d) {
    if (d) os << ',';
    os << t.size(d);
  }
  os << ']';
  return os.str();
}

namespace {

void check_level(int level) {
  if (level < 1 || level > kPyramidLevels) {
    throw ShapeError("pyramid level " + std::to_string(level) + " outside [1," +
                     std::to_string(kPyramidLevels) + "]");
  }
}

}  // namespace

Frame::Frame(torch::Tensor data) : data_(std::move(data)) {
  if (data_.dim() != 3 || data_.size(0) != 3) {
    throw ShapeError("frame must be [3,H,W], got " + shape_string(data_));
  }
  if (data_.size(1) <= 0 || data_.size(2) <= 0 || data_.size(1) % kFrameAlignment != 0 ||
      data_.size(2) % kFrameAlignment != 0) {
    throw ShapeError("frame sides must be positive multiples of " + std::to_string(kFrameAlignment) +
                     ", got " + shape_string(data_));
  }
  if (!data_.is_floating_point()) data_ = data_.to(torch::kFloat32);
  const auto lo = data_.min().item<double>();
  const auto hi = data_.max().item<double>();
  if (lo < 0.0 || hi > 1.0 || std::isnan(lo) || std::isnan(hi)) {
    throw std::domain_error("frame values must lie in [0,1]");
  }
}

Frame Frame::clamped(const torch::Tensor& data) {
  return Frame(data.clamp(0.0, 1.0));
}

FeatureMap::FeatureMap(torch::Tensor data, int level) : data_(std::move(data)), level_(level) {
  if (data_.dim() != 4) throw ShapeError("feature map must be [N,C,H,W], got " + shape_string(data_));
  check_level(level_);
}

FlowField::FlowField(torch::Tensor data, int level) : data_(std::move(data)), level_(level) {
  if (data_.dim() != 4 || data_.size(1) != 2) {
    throw ShapeError("flow field must be [N,2,H,W], got " + shape_string(data_));
  }
  check_level(level_);
}

AffineParams::AffineParams(torch::Tensor theta) : theta_(std::move(theta)) {
  if (theta_.dim() != 3 || theta_.size(1) != 2 || theta_.size(2) != 3) {
    throw ShapeError("affine parameters must be [N,2,3], got " + shape_string(theta_));
  }
}

AffineParams AffineParams::identity(int64_t batch, torch::TensorOptions options) {
  auto eye = torch::tensor({1.0, 0.0, 0.0, 0.0, 1.0, 0.0}, options).view({1, 2, 3});
  return AffineParams(eye.repeat({batch, 1, 1}));
}

}  // namespace pinet
