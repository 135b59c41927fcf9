#include "pinet/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace pinet::numerics {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

namespace {

void require_same_spatial(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.dim() != 4 || b.dim() != 4 || a.size(0) != b.size(0) || a.size(2) != b.size(2) ||
      a.size(3) != b.size(3)) {
    throw ShapeError(std::string(what) + ": incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
  }
}

torch::Tensor gather_pixels(const torch::Tensor& flat_src, const torch::Tensor& index, int64_t channels) {
  // flat_src [N,C,H*W], index [N,P] -> [N,C,P]
  return flat_src.gather(2, index.unsqueeze(1).expand({-1, channels, -1}));
}

}  // namespace

torch::Tensor bilinear_sample(const torch::Tensor& src, const torch::Tensor& x, const torch::Tensor& y) {
  if (src.dim() != 4 || x.dim() != 3 || x.sizes() != y.sizes() || x.size(0) != src.size(0)) {
    throw ShapeError("bilinear_sample: bad shapes src " + shape_string(src) + " x " + shape_string(x));
  }
  const int64_t n = src.size(0), c = src.size(1), h = src.size(2), w = src.size(3);
  const auto out_h = x.size(1), out_w = x.size(2);

  auto xc = x.clamp(0.0, static_cast<double>(w - 1));
  auto yc = y.clamp(0.0, static_cast<double>(h - 1));
  auto x0 = xc.detach().floor();
  auto y0 = yc.detach().floor();
  auto wx = xc - x0;
  auto wy = yc - y0;

  auto x0i = x0.to(torch::kLong);
  auto y0i = y0.to(torch::kLong);
  auto x1i = (x0i + 1).clamp_max(w - 1);
  auto y1i = (y0i + 1).clamp_max(h - 1);

  auto flat = src.reshape({n, c, h * w});
  auto idx = [&](const torch::Tensor& yi, const torch::Tensor& xi) { return (yi * w + xi).reshape({n, -1}); };
  auto v00 = gather_pixels(flat, idx(y0i, x0i), c);
  auto v01 = gather_pixels(flat, idx(y0i, x1i), c);
  auto v10 = gather_pixels(flat, idx(y1i, x0i), c);
  auto v11 = gather_pixels(flat, idx(y1i, x1i), c);

  auto ax = wx.reshape({n, 1, -1});
  auto ay = wy.reshape({n, 1, -1});
  auto top = v00 + (v01 - v00) * ax;
  auto bottom = v10 + (v11 - v10) * ax;
  return (top + (bottom - top) * ay).reshape({n, c, out_h, out_w});
}

torch::Tensor backwarp(const torch::Tensor& src, const torch::Tensor& flow) {
  if (flow.dim() != 4 || flow.size(1) != 2) throw ShapeError("backwarp: flow must be [N,2,H,W]");
  require_same_spatial(src, flow, "backwarp");
  const auto h = src.size(2), w = src.size(3);
  auto opts = flow.options();
  // Pixel coordinates to the corner-aligned normalized grid; border padding clamps like bilinear_sample.
  auto normalize = [](const torch::Tensor& p, int64_t size) {
    return size > 1 ? p * (2.0 / static_cast<double>(size - 1)) - 1.0 : torch::zeros_like(p);
  };
  auto gx = normalize(torch::arange(w, opts).view({1, 1, w}) + flow.select(1, 0), w);
  auto gy = normalize(torch::arange(h, opts).view({1, h, 1}) + flow.select(1, 1), h);
  return torch::grid_sampler(src, torch::stack({gx, gy}, -1), 0, 1, true);
}

FeatureMap backwarp(const FeatureMap& src, const FlowField& flow) {
  return FeatureMap(backwarp(src.tensor(), flow.tensor()), src.level());
}

Frame backwarp(const Frame& src, const FlowField& flow) {
  if (flow.tensor().size(0) != 1) throw ShapeError("backwarp: frame warp expects a single flow");
  return Frame::clamped(backwarp(src.batched(), flow.tensor()).squeeze(0));
}

namespace {

// out[n,d,y,x] = 1/C sum_c a[n,c,y,x] * b[n,c,y+dy,x+dx], b zero outside. Row loops over x
// keep the inner products contiguous.
template <typename T>
void correlation_forward(const T* a, const T* b, T* out, int64_t n, int64_t c, int64_t h, int64_t w, int r) {
  const int64_t d = (2 * r + 1) * (2 * r + 1), plane = h * w;
  const T scale = T(1) / static_cast<T>(c);
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* pa = a + (s * c + ch) * plane;
      const T* pb = b + (s * c + ch) * plane;
      for (int dy = -r, k = 0; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++k) {
          T* po = out + (s * d + k) * plane;
          const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(w, w - dx);
          for (int64_t y = std::max<int64_t>(0, -dy); y < std::min<int64_t>(h, h - dy); ++y) {
            const T* ra = pa + y * w;
            const T* rb = pb + (y + dy) * w + dx;
            T* ro = po + y * w;
            for (int64_t x = x0; x < x1; ++x) ro[x] += ra[x] * rb[x];
          }
        }
      }
    }
    for (int64_t k = 0; k < d * plane; ++k) out[s * d * plane + k] *= scale;
  }
}

template <typename T>
void correlation_backward(const T* a, const T* b, const T* g, T* ga, T* gb, int64_t n, int64_t c, int64_t h,
                          int64_t w, int r) {
  const int64_t d = (2 * r + 1) * (2 * r + 1), plane = h * w;
  const T scale = T(1) / static_cast<T>(c);
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* pa = a + (s * c + ch) * plane;
      const T* pb = b + (s * c + ch) * plane;
      T* qa = ga + (s * c + ch) * plane;
      T* qb = gb + (s * c + ch) * plane;
      for (int dy = -r, k = 0; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++k) {
          const T* pg = g + (s * d + k) * plane;
          const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min<int64_t>(w, w - dx);
          for (int64_t y = std::max<int64_t>(0, -dy); y < std::min<int64_t>(h, h - dy); ++y) {
            const T* rg = pg + y * w;
            const T* ra = pa + y * w;
            const T* rb = pb + (y + dy) * w + dx;
            T* sa = qa + y * w;
            T* sb = qb + (y + dy) * w + dx;
            for (int64_t x = x0; x < x1; ++x) {
              sa[x] += rg[x] * rb[x] * scale;
              sb[x] += rg[x] * ra[x] * scale;
            }
          }
        }
      }
    }
  }
}

class CorrelationFunction : public torch::autograd::Function<CorrelationFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& a_in,
                               const torch::Tensor& b_in, int64_t radius) {
    auto a = a_in.contiguous(), b = b_in.contiguous();
    ctx->save_for_backward({a, b});
    ctx->saved_data["radius"] = radius;
    const int64_t d = (2 * radius + 1) * (2 * radius + 1);
    auto out = torch::zeros({a.size(0), d, a.size(2), a.size(3)}, a.options());
    AT_DISPATCH_FLOATING_TYPES(a.scalar_type(), "correlate", [&] {
      correlation_forward<scalar_t>(a.data_ptr<scalar_t>(), b.data_ptr<scalar_t>(), out.data_ptr<scalar_t>(),
                                    a.size(0), a.size(1), a.size(2), a.size(3), static_cast<int>(radius));
    });
    return out;
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    auto saved = ctx->get_saved_variables();
    auto a = saved[0], b = saved[1];
    const auto radius = ctx->saved_data["radius"].toInt();
    auto g = grads[0].contiguous();
    auto ga = torch::zeros_like(a), gb = torch::zeros_like(b);
    AT_DISPATCH_FLOATING_TYPES(a.scalar_type(), "correlate_backward", [&] {
      correlation_backward<scalar_t>(a.data_ptr<scalar_t>(), b.data_ptr<scalar_t>(), g.data_ptr<scalar_t>(),
                                     ga.data_ptr<scalar_t>(), gb.data_ptr<scalar_t>(), a.size(0), a.size(1),
                                     a.size(2), a.size(3), static_cast<int>(radius));
    });
    return {ga, gb, torch::Tensor()};
  }
};

}  // namespace

torch::Tensor correlate(const torch::Tensor& a, const torch::Tensor& b, int radius) {
  if (radius < 0) throw std::invalid_argument("correlate: radius must be >= 0");
  if (a.sizes() != b.sizes() || a.dim() != 4) {
    throw ShapeError("correlate: shapes differ " + shape_string(a) + " vs " + shape_string(b));
  }
  if (a.scalar_type() != b.scalar_type()) throw std::invalid_argument("correlate: dtype mismatch");
  return CorrelationFunction::apply(a, b, static_cast<int64_t>(radius));
}

FeatureMap correlate(const FeatureMap& a, const FeatureMap& b, int radius) {
  return FeatureMap(correlate(a.tensor(), b.tensor(), radius), a.level());
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor downsample2x(const torch::Tensor& x) { return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)); }

torch::Tensor upsample_flow(const torch::Tensor& flow) { return upsample2x(flow) * 2.0; }

FlowField upsample_flow(const FlowField& flow) {
  if (flow.level() <= 1) throw ShapeError("upsample_flow: level 1 has no finer level");
  return FlowField(upsample_flow(flow.tensor()), flow.level() - 1);
}

torch::Tensor downsample_flow(const torch::Tensor& flow) { return downsample2x(flow) * 0.5; }

std::pair<torch::Tensor, torch::Tensor> affine_sample_points(const torch::Tensor& theta, int64_t height,
                                                             int64_t width) {
  if (theta.dim() != 3 || theta.size(1) != 2 || theta.size(2) != 3) {
    throw ShapeError("affine: theta must be [N,2,3], got " + shape_string(theta));
  }
  // Normalized coordinate xn = 2u/W with u = i + 0.5 - W/2 the centered pixel
  // coordinate. Working in u keeps the identity transform exact in floating point.
  auto opts = theta.options();
  const auto w = static_cast<double>(width), h = static_cast<double>(height);
  auto u = (torch::arange(width, opts) + (0.5 - w / 2.0)).view({1, 1, width});
  auto v = (torch::arange(height, opts) + (0.5 - h / 2.0)).view({1, height, 1});
  auto t = [&](int r, int c) { return theta.index({Slice(), r, c}).view({-1, 1, 1}); };
  auto x = t(0, 0) * u + t(0, 1) * (v * (w / h)) + t(0, 2) * (w / 2.0) + (w / 2.0 - 0.5);
  auto y = t(1, 0) * (u * (h / w)) + t(1, 1) * v + t(1, 2) * (h / 2.0) + (h / 2.0 - 0.5);
  return {x, y};
}

torch::Tensor affine_transform(const torch::Tensor& src, const torch::Tensor& theta) {
  if (src.dim() != 4 || theta.size(0) != src.size(0)) {
    throw ShapeError("affine_transform: batch mismatch " + shape_string(src) + " vs " + shape_string(theta));
  }
  auto grid = torch::affine_grid_generator(theta.to(src.scalar_type()), src.sizes(), false);
  return torch::grid_sampler(src, grid, 0, 1, false);
}

FeatureMap affine_transform(const FeatureMap& src, const AffineParams& theta) {
  return FeatureMap(affine_transform(src.tensor(), theta.tensor()), src.level());
}

namespace {

void require_same_frames(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shapes differ " + shape_string(a) + " vs " + shape_string(b));
  }
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g = torch::exp(-(coords * coords) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return torch::outer(g, g);
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_frames(a, b, "psnr");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const Frame& a, const Frame& b) { return psnr(a.tensor(), b.tensor()); }

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  require_same_frames(a, b, "ssim");
  if (a.dim() != 3 || a.size(1) < kWindow || a.size(2) < kWindow) {
    throw ShapeError("ssim: image smaller than the 11x11 window: " + shape_string(a));
  }
  const auto channels = a.size(0);
  auto x = a.to(torch::kFloat64).unsqueeze(1);  // [C,1,H,W]; channels are filtered independently
  auto y = b.to(torch::kFloat64).unsqueeze(1);
  auto window = gaussian_window(kWindow, kSigma).view({1, 1, kWindow, kWindow});
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, window); };

  auto mu_x = filt(x), mu_y = filt(y);
  auto sxx = filt(x * x) - mu_x * mu_x;
  auto syy = filt(y * y) - mu_y * mu_y;
  auto sxy = filt(x * y) - mu_x * mu_y;
  auto map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)) /
             ((mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2));
  // Per-channel mean, then channel average.
  return map.reshape({channels, -1}).mean(1).mean().item<double>();
}

double ssim(const Frame& a, const Frame& b) { return ssim(a.tensor(), b.tensor()); }

}  // namespace pinet::numerics
