#include "pinet/layers.hpp"

namespace pinet {

DenseBlockImpl::DenseBlockImpl(int64_t in, int64_t growth, int64_t out, double slope) : slope_(slope) {
  c1_ = register_module("c1", conv(in, growth));
  c2_ = register_module("c2", conv(in + growth, growth));
  c3_ = register_module("c3", conv(in + 2 * growth, out));
  zero_init(c3_);
}

torch::Tensor DenseBlockImpl::forward(const torch::Tensor& x) {
  auto y1 = leaky(c1_(x), slope_);
  auto x1 = torch::cat({x, y1}, 1);
  auto y2 = leaky(c2_(x1), slope_);
  return c3_(torch::cat({x1, y2}, 1));
}

}  // namespace pinet
