#pragma once

#include "pinet/tensor_types.hpp"

namespace pinet::numerics {

// Differentiable sampling primitives on batched NCHW tensors. Gradients flow to
// all floating-point inputs.

/// Bilinear lookup of `src` [N,C,H,W] at pixel coordinates `x`,`y` [N,H',W'].
/// Coordinates are clamped to the image, so out-of-frame samples repeat the border.
/// Gather-based; backwarp and affine_transform use the native sampler with the same semantics.
torch::Tensor bilinear_sample(const torch::Tensor& src, const torch::Tensor& x, const torch::Tensor& y);

/// out(p) = src(p + flow(p)), border-clamped. flow is [N,2,H,W] in pixels.
torch::Tensor backwarp(const torch::Tensor& src, const torch::Tensor& flow);
FeatureMap backwarp(const FeatureMap& src, const FlowField& flow);
Frame backwarp(const Frame& src, const FlowField& flow);

/// Cost volume with (2r+1)^2 channels ordered by (dy, dx), dy major.
/// Channel (dy,dx) at p is the channel-mean of a(p) * b(p + (dx,dy)); b is zero outside.
torch::Tensor correlate(const torch::Tensor& a, const torch::Tensor& b, int radius);
FeatureMap correlate(const FeatureMap& a, const FeatureMap& b, int radius);

/// Bilinear 2x upsampling of a flow with values doubled.
torch::Tensor upsample_flow(const torch::Tensor& flow);
FlowField upsample_flow(const FlowField& flow);

/// 2x2 mean pooling with values halved; the inverse of the pixel-unit convention.
torch::Tensor downsample_flow(const torch::Tensor& flow);

/// Plain bilinear 2x resampling of arbitrary maps (align_corners = false).
torch::Tensor upsample2x(const torch::Tensor& x);
torch::Tensor downsample2x(const torch::Tensor& x);

/// Sampling positions in pixels for an affine grid. theta is [N,2,3] in
/// normalized coordinates with pixel centers at (2i+1)/S - 1. Returns (x, y), each [N,H,W].
std::pair<torch::Tensor, torch::Tensor> affine_sample_points(const torch::Tensor& theta, int64_t height,
                                                             int64_t width);

/// Spatial-transformer resampling of `src` [N,C,H,W] with theta [N,2,3].
torch::Tensor affine_transform(const torch::Tensor& src, const torch::Tensor& theta);
FeatureMap affine_transform(const FeatureMap& src, const AffineParams& theta);

// Image quality metrics.

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) with unit peak, capped at kPsnrCap (reached when the frames match).
double psnr(const Frame& a, const Frame& b);
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// evaluated on valid window positions and averaged over channels.
double ssim(const Frame& a, const Frame& b);
double ssim(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace pinet::numerics
