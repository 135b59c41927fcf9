#include "pinet/data.hpp"

#include "pinet/flo_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace pinet::data {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using torch::indexing::Slice;

void Clip::validate() const {
  if (length() < kMinClipLength || length() > kMaxClipLength) {
    throw std::invalid_argument("clip '" + id + "' has " + std::to_string(length()) + " frames, expected " +
                                std::to_string(kMinClipLength) + ".." + std::to_string(kMaxClipLength));
  }
  for (const auto& f : frames) {
    if (f.tensor().sizes() != frames.front().tensor().sizes()) {
      throw ShapeError("clip '" + id + "' mixes frame sizes");
    }
  }
}

FileFlowOracle::FileFlowOracle(fs::path dir) : dir_(std::move(dir)) {}

fs::path FileFlowOracle::file_name(int src, int dst) {
  return std::to_string(src) + "_" + std::to_string(dst) + ".flo";
}

FlowField FileFlowOracle::flow(int src, int dst) const { return io::read_flo(dir_ / file_name(src, dst)); }

// Synthetic ----------------------------------------------------------------------

namespace {

constexpr int kTextureWaves = 6;
constexpr double kWaveAmplitude = 0.05;
constexpr double kFadeWidth = 4.0;

struct Wave {
  double fx, fy;                 // cycles per pixel
  std::array<double, 3> phase;  // per channel
};

struct Texture {
  std::array<double, 3> base{};
  std::vector<Wave> waves;

  static Texture make(std::mt19937_64& rng, double min_wavelength, double max_wavelength) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Texture t;
    for (auto& b : t.base) b = 0.35 + 0.3 * unit(rng);
    for (int k = 0; k < kTextureWaves; ++k) {
      const double wavelength = min_wavelength + (max_wavelength - min_wavelength) * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      Wave w{std::cos(angle) / wavelength, std::sin(angle) / wavelength, {}};
      for (auto& p : w.phase) p = 2.0 * std::numbers::pi * unit(rng);
      t.waves.push_back(w);
    }
    return t;
  }

  // x, y: [H,W] float64 content coordinates -> [3,H,W]
  torch::Tensor eval(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& weight) const {
    std::vector<torch::Tensor> channels;
    for (int c = 0; c < 3; ++c) {
      auto v = torch::zeros_like(x);
      for (const auto& w : waves) {
        v = v + kWaveAmplitude * torch::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase[c]);
      }
      channels.push_back(base[c] + weight * v);
    }
    return torch::stack(channels, 0);
  }
};

struct Motion {
  double cx, cy, vx, vy, rotation;

  // A_k^{-1}(p): content coordinate seen at pixel p in frame k.
  std::pair<torch::Tensor, torch::Tensor> to_content(const torch::Tensor& px, const torch::Tensor& py, int k) const {
    const double a = -rotation * k, c = std::cos(a), s = std::sin(a);
    auto dx = px - cx - k * vx, dy = py - cy - k * vy;
    return {c * dx - s * dy + cx, s * dx + c * dy + cy};
  }
  // A_k(q): pixel showing content coordinate q in frame k.
  std::pair<torch::Tensor, torch::Tensor> to_frame(const torch::Tensor& qx, const torch::Tensor& qy, int k) const {
    const double a = rotation * k, c = std::cos(a), s = std::sin(a);
    auto dx = qx - cx, dy = qy - cy;
    return {c * dx - s * dy + cx + k * vx, s * dx + c * dy + cy + k * vy};
  }
  std::pair<double, double> to_frame(double qx, double qy, int k) const {
    const double a = rotation * k, c = std::cos(a), s = std::sin(a);
    const double dx = qx - cx, dy = qy - cy;
    return {c * dx - s * dy + cx + k * vx, s * dx + c * dy + cy + k * vy};
  }
};

// Content is centered on the midpoint of its trajectory so the whole clip can be covered.
struct Layout {
  Motion motion;
  double x0, x1, y0, y1;  // textured window in content coordinates
};

Layout make_layout(const SyntheticSpec& spec, int length) {
  const double w = spec.width, h = spec.height;
  const double mid = (length - 1) / 2.0;
  Layout lay;
  lay.motion = Motion{(w - 1) / 2.0, (h - 1) / 2.0, spec.vx, spec.vy, spec.rotation};
  // Content coordinates are frame-0 pixel coordinates; shift so the trajectory midpoint is centered.
  const double cx = (w - 1) / 2.0 - mid * spec.vx;
  const double cy = (h - 1) / 2.0 - mid * spec.vy;
  const double half_x = (w - 1) / 2.0 - mid * std::abs(spec.vx) - spec.margin;
  const double half_y = (h - 1) / 2.0 - mid * std::abs(spec.vy) - spec.margin;
  if (half_x < 2.0 * kFadeWidth || half_y < 2.0 * kFadeWidth) {
    throw std::domain_error("synthetic motion exits the frame: velocity too large for clip length and size");
  }
  lay.x0 = cx - half_x;
  lay.x1 = cx + half_x;
  lay.y0 = cy - half_y;
  lay.y1 = cy + half_y;
  for (int k = 0; k < length; ++k) {
    for (double qx : {lay.x0, lay.x1}) {
      for (double qy : {lay.y0, lay.y1}) {
        auto [px, py] = lay.motion.to_frame(qx, qy, k);
        if (px < 0.0 || px > w - 1 || py < 0.0 || py > h - 1) {
          throw std::domain_error("synthetic motion exits the frame at frame " + std::to_string(k));
        }
      }
    }
  }
  if (spec.patch) {
    const auto& p = *spec.patch;
    const double half = p.size / 2.0;
    for (int k : {0, length - 1}) {
      const double px = p.x + k * p.vx, py = p.y + k * p.vy;
      if (px - half < 0.0 || px + half > w - 1 || py - half < 0.0 || py + half > h - 1) {
        throw std::domain_error("synthetic patch exits the frame at frame " + std::to_string(k));
      }
    }
  }
  return lay;
}

torch::Tensor smooth_window(const torch::Tensor& q, double lo, double hi) {
  auto ramp = [](const torch::Tensor& t) {
    auto c = t.clamp(0.0, 1.0);
    return c * c * (3.0 - 2.0 * c);
  };
  return ramp((q - lo) / kFadeWidth) * ramp((hi - q) / kFadeWidth);
}

std::pair<torch::Tensor, torch::Tensor> pixel_grid(int h, int w) {
  auto xs = torch::arange(w, torch::kFloat64).view({1, w}).expand({h, w});
  auto ys = torch::arange(h, torch::kFloat64).view({h, 1}).expand({h, w});
  return {xs, ys};
}

torch::Tensor patch_mask(const SyntheticPatch& p, const torch::Tensor& px, const torch::Tensor& py, int k) {
  const double half = p.size / 2.0;
  const double cx = p.x + k * p.vx, cy = p.y + k * p.vy;
  return ((px - cx).abs() < half) & ((py - cy).abs() < half);
}

}  // namespace

SyntheticFlowOracle::SyntheticFlowOracle(SyntheticSpec spec, int length) : spec_(std::move(spec)), length_(length) {
  make_layout(spec_, length_);
}

FlowField SyntheticFlowOracle::flow(int src, int dst) const {
  if (src < 0 || dst < 0 || src >= length_ || dst >= length_) {
    throw std::out_of_range("synthetic oracle: frame index outside the clip");
  }
  const auto lay = make_layout(spec_, length_);
  auto [px, py] = pixel_grid(spec_.height, spec_.width);
  auto [qx, qy] = lay.motion.to_content(px, py, src);
  auto [bx, by] = lay.motion.to_frame(qx, qy, dst);
  auto fx = bx - px, fy = by - py;
  if (spec_.patch) {
    const auto& p = *spec_.patch;
    auto inside = patch_mask(p, px, py, src);
    fx = torch::where(inside, torch::full_like(fx, (dst - src) * p.vx), fx);
    fy = torch::where(inside, torch::full_like(fy, (dst - src) * p.vy), fy);
  }
  return FlowField(torch::stack({fx, fy}, 0).unsqueeze(0).to(torch::kFloat32), 1);
}

std::pair<Clip, std::shared_ptr<SyntheticFlowOracle>> generate_synthetic_clip(const SyntheticSpec& spec, int length) {
  if (spec.height % kFrameAlignment != 0 || spec.width % kFrameAlignment != 0) {
    throw ShapeError("synthetic frame size must be a multiple of " + std::to_string(kFrameAlignment));
  }
  if (length < 2) throw std::invalid_argument("synthetic clip needs at least two frames");
  const auto lay = make_layout(spec, length);
  std::mt19937_64 rng(spec.seed);
  const auto background = Texture::make(rng, 10.0, 28.0);
  const auto patch_texture = Texture::make(rng, 5.0, 12.0);

  auto [px, py] = pixel_grid(spec.height, spec.width);
  Clip clip;
  clip.id = "synthetic-" + std::to_string(spec.seed);
  for (int k = 0; k < length; ++k) {
    auto [qx, qy] = lay.motion.to_content(px, py, k);
    auto weight = smooth_window(qx, lay.x0, lay.x1) * smooth_window(qy, lay.y0, lay.y1);
    auto img = background.eval(qx, qy, weight);
    if (spec.patch) {
      const auto& p = *spec.patch;
      auto local_x = px - k * p.vx, local_y = py - k * p.vy;
      auto tex = patch_texture.eval(local_x, local_y, torch::ones_like(local_x));
      img = torch::where(patch_mask(p, px, py, k).unsqueeze(0), tex, img);
    }
    clip.frames.emplace_back(img.clamp(0.0, 1.0).to(torch::kFloat32));
  }
  return {std::move(clip), std::make_shared<SyntheticFlowOracle>(spec, length)};
}

// Sampling -----------------------------------------------------------------------

void SamplingConfig::validate() const {
  if (resize_width <= 0 || resize_height <= 0 || crop_width <= 0 || crop_height <= 0) {
    throw ConfigError("sampling sizes must be positive");
  }
  if (crop_width > resize_width || crop_height > resize_height) {
    throw ConfigError("sampling crop must fit inside the resized frame");
  }
  if (crop_width % kFrameAlignment || crop_height % kFrameAlignment) {
    throw ConfigError("sampling crop sides must be multiples of " + std::to_string(kFrameAlignment));
  }
}

namespace {

torch::Tensor resize_map(const torch::Tensor& x, int h, int w, bool antialias) {
  if (x.size(-2) == h && x.size(-1) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false)
                               .antialias(antialias));
}

}  // namespace

torch::Tensor CropGeometry::apply_to_frame(const torch::Tensor& frame) const {
  auto resized = resize_map(frame.unsqueeze(0), resize_height, resize_width, true)[0];
  return resized.index({Slice(), Slice(offset_y, offset_y + crop_height), Slice(offset_x, offset_x + crop_width)});
}

torch::Tensor CropGeometry::apply_to_flow(const torch::Tensor& flow) const {
  auto resized = resize_map(flow, resize_height, resize_width, false);
  if (resize_width != source_width || resize_height != source_height) {
    auto scale = torch::tensor({static_cast<double>(resize_width) / source_width,
                                static_cast<double>(resize_height) / source_height},
                               flow.options())
                     .view({1, 2, 1, 1});
    resized = resized * scale;
  }
  return resized.index(
      {Slice(), Slice(), Slice(offset_y, offset_y + crop_height), Slice(offset_x, offset_x + crop_width)});
}

const Frame& TrainingItem::at(int t) const {
  if (t == 0) return first;
  if (t == n) return last;
  if (t < 0 || t > n) throw std::out_of_range("training item timestamp outside [0,n]");
  return intermediates[static_cast<size_t>(t - 1)];
}

std::optional<FlowField> TrainingItem::oracle_flow(int src, int dst) const {
  if (!oracle) return std::nullopt;
  return FlowField(geometry.apply_to_flow(oracle->flow(src, dst).tensor()), 1);
}

TrainingItem sample_training_item(const Clip& clip, std::uint64_t seed, const SamplingConfig& cfg,
                                  std::shared_ptr<const FlowOracle> oracle) {
  cfg.validate();
  if (clip.length() < kMinClipLength) {
    throw std::invalid_argument("clip '" + clip.id + "' is shorter than " + std::to_string(kMinClipLength) + " frames");
  }
  clip.validate();
  std::mt19937_64 rng(seed);
  CropGeometry geo;
  geo.source_width = static_cast<int>(clip.frames.front().width());
  geo.source_height = static_cast<int>(clip.frames.front().height());
  geo.resize_width = cfg.resize_width;
  geo.resize_height = cfg.resize_height;
  geo.crop_width = cfg.crop_width;
  geo.crop_height = cfg.crop_height;
  geo.offset_x = std::uniform_int_distribution<int>(0, cfg.resize_width - cfg.crop_width)(rng);
  geo.offset_y = std::uniform_int_distribution<int>(0, cfg.resize_height - cfg.crop_height)(rng);

  auto convert = [&](const Frame& f) { return Frame::clamped(geo.apply_to_frame(f.tensor()).contiguous()); };
  const int n = clip.length() - 1;
  TrainingItem item{convert(clip.frames.front()), convert(clip.frames.back()), {}, n, geo, std::move(oracle)};
  for (int t = 1; t < n; ++t) item.intermediates.push_back(convert(clip.frames[static_cast<size_t>(t)]));
  return item;
}

// Disk layout --------------------------------------------------------------------

Frame read_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return Frame(t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous());
}

void write_image(const fs::path& path, const Frame& frame) {
  auto hwc = frame.tensor().detach().mul(255.0).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(frame.height()), static_cast<int>(frame.width()), CV_8UC3, hwc.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image " + path.string());
}

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

Clip load_clip(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Clip clip;
  clip.id = dir.filename().string();
  for (const auto& f : files) clip.frames.push_back(read_image(f));
  return clip;
}

void save_clip(const fs::path& dir, const Clip& clip) {
  fs::create_directories(dir);
  for (int k = 0; k < clip.length(); ++k) write_image(dir / frame_file_name(k), clip.frames[static_cast<size_t>(k)]);
}

std::vector<ClipSource> load_clip_root(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("data directory not found: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<ClipSource> out;
  for (const auto& d : dirs) {
    auto clip = load_clip(d);
    if (clip.frames.empty()) continue;
    std::shared_ptr<const FlowOracle> oracle;
    for (const auto& entry : fs::directory_iterator(d)) {
      if (entry.path().extension() == ".flo") {
        oracle = std::make_shared<FileFlowOracle>(d);
        break;
      }
    }
    out.push_back({std::move(clip), std::move(oracle)});
  }
  if (out.empty()) throw std::runtime_error("no clips found under " + root.string());
  return out;
}

}  // namespace pinet::data
