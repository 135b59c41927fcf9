#include "pinet/cli.hpp"

#include "pinet/checkpoint.hpp"
#include "pinet/config.hpp"
#include "pinet/scheduler.hpp"
#include "pinet/train_eval.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace pinet::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flags, config keys or inconsistent arguments.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Missing or unreadable inputs, unwritable outputs.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

int parse_int(const std::string& key, std::string_view v) {
  int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError(key + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(const std::string& key, std::string_view v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw UsageError(key + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_int(key, item));
  if (out.empty()) throw UsageError(key + ": empty list");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::pair<PINet, RunConfig> open_model(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("checkpoint not found: " + path.string());
  try {
    return load_model(path);
  } catch (const ParseError& e) {
    throw IoError(e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint config: ") + e.what());
  }
}

Frame open_image(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("image not found: " + path.string());
  try {
    return data::read_image(path);
  } catch (const ShapeError&) {
    throw;
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

// train ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, synthetic, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::optional<int> epochs_override;
};

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
  return buf;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.data.empty() == a.synthetic.empty()) throw UsageError("train: exactly one of --data or --synthetic is required");
  RunConfig cfg = a.synthetic.empty() ? full_run_config() : desk_run_config();
  if (!a.config.empty()) {
    if (!fs::is_regular_file(a.config)) throw IoError("config not found: " + a.config);
    cfg = load_config(a.config, cfg);
  }
  if (a.seed_set) cfg.train.seed = a.seed;
  if (a.epochs_override) {
    if (*a.epochs_override <= 0) throw UsageError("--epochs-override must be positive");
    cfg.train.epochs = *a.epochs_override;
  }
  cfg.validate();

  std::vector<data::ClipSource> clips;
  if (!a.synthetic.empty()) {
    clips = synthetic_clips(a.synthetic);
  } else {
    try {
      clips = data::load_clip_root(a.data);
    } catch (const fs::filesystem_error& e) {
      throw IoError(e.what());
    } catch (const std::runtime_error& e) {
      throw IoError(e.what());
    }
  }
  for (const auto& c : clips) c.clip.validate();

  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto config_text = render_config(cfg);
  write_text(dir / "config.txt", config_text);

  torch::set_num_threads(1);
  auto model = make_model(cfg.model, cfg.train.seed);
  Trainer trainer(model, cfg.train);
  std::ofstream losses(dir / "losses.csv", std::ios::trunc);
  if (!losses) throw IoError("cannot write " + (dir / "losses.csv").string());
  losses << "epoch,iteration,lr,lambda1,lambda2,lambda3,l_m2fnet,l_pnet,l_gdl,l_inet,l_total\n";

  std::vector<fs::path> written;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    auto reports = trainer.run_epoch(clips, epoch, [&](const StepReport& r) {
      const auto& l = r.loss;
      losses << r.epoch << ',' << r.iteration << ',' << fmt("%.9g", r.lr) << ',' << fmt("%g", l.lambda1) << ','
             << fmt("%g", l.lambda2) << ',' << fmt("%g", l.lambda3) << ',' << fmt("%.9g", l.l_m2fnet) << ','
             << fmt("%.9g", l.l_pnet) << ',' << fmt("%.9g", l.l_gdl) << ',' << fmt("%.9g", l.l_inet) << ','
             << fmt("%.9g", l.l_total) << '\n';
    });
    losses.flush();
    CheckpointMeta meta{epoch + 1, fnv1a(config_text), trainer.rng_state(), config_text};
    const auto path = dir / checkpoint_name(epoch + 1);
    save_checkpoint(path, capture_checkpoint(*model, meta));
    written.push_back(path);
    if (cfg.train.keep_checkpoints > 0 && written.size() > static_cast<size_t>(cfg.train.keep_checkpoints)) {
      fs::remove(written.front());
      written.erase(written.begin());
    }
    double total = 0.0;
    for (const auto& r : reports) total += r.loss.l_total;
    out << "epoch " << epoch + 1 << "/" << cfg.train.epochs << " loss " << fmt("%.6f", total / reports.size())
        << '\n';
  }
  fs::copy_file(written.back(), dir / "final.ckpt", fs::copy_options::overwrite_existing);
  return kExitOk;
}

// interpolate -----------------------------------------------------------------------

struct InterpolateArgs {
  std::string checkpoint, left, right, targets = "all", out;
  int gap = 0;
};

int cmd_interpolate(const InterpolateArgs& a, std::ostream& out) {
  if (a.gap < 2) throw UsageError("--gap must be at least 2");
  const auto targets = parse_targets(a.targets, a.gap);
  auto [model, cfg] = open_model(a.checkpoint);
  auto left = open_image(a.left);
  auto right = open_image(a.right);
  if (left.tensor().sizes() != right.tensor().sizes()) throw UsageError("--left and --right differ in size");

  torch::set_num_threads(1);
  const fs::path dir(a.out);
  ensure_dir(dir);
  auto frames = run_pinet(model->pnet, model->inet, left, right, a.gap, targets, cfg.model.schedule);
  std::string report = "target,mode\n";
  for (size_t k = 0; k < targets.size(); ++k) {
    data::write_image(dir / data::frame_file_name(targets[k]), frames[k]);
    report += std::to_string(targets[k]) + "," + std::string(to_string(route(a.gap, targets[k], cfg.model.schedule))) + "\n";
  }
  write_text(dir / "routes.csv", report);
  out << "wrote " << targets.size() << " frames to " << dir.string() << '\n';
  return kExitOk;
}

// eval ---------------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, gaps, report;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto gaps = parse_int_list("--gaps", a.gaps);
  for (int g : gaps) {
    if (g < 2) throw UsageError("--gaps: every gap must be at least 2");
  }
  auto [model, cfg] = open_model(a.checkpoint);
  std::vector<data::ClipSource> sources;
  try {
    sources = data::load_clip_root(a.data);
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  torch::set_num_threads(1);
  const int m = cfg.model.pnet.propagation.m;

  std::string report = "kind,gap,index,psnr,ssim,z\n";
  std::vector<int> heat_gaps;
  std::vector<std::vector<data::Clip>> heat_clips;
  for (int g : gaps) {
    std::vector<data::Clip> clips;
    for (const auto& s : sources) {
      if (s.clip.length() >= g + 1) clips.push_back(s.clip);
    }
    if (clips.empty()) throw UsageError("no clip has the " + std::to_string(g + 1) + " frames gap " + std::to_string(g) + " needs");
    auto table = evaluate_timesteps(model, clips, g);
    const auto center = static_cast<size_t>(g / 2 - 1);
    report += "gap," + std::to_string(g) + ",," + fmt("%.6f", table.mean_psnr()) + "," + fmt("%.6f", table.mean_ssim()) + ",\n";
    report += "center," + std::to_string(g) + "," + std::to_string(g / 2) + "," + fmt("%.6f", table.psnr[center]) + "," +
              fmt("%.6f", table.ssim[center]) + ",\n";
    report += "range," + std::to_string(g) + ",," + fmt("%.6f", table.range()) + ",,\n";
    for (int i = 1; i < g; ++i) {
      report += "timestep," + std::to_string(g) + "," + std::to_string(i) + "," +
                fmt("%.6f", table.psnr[static_cast<size_t>(i - 1)]) + "," +
                fmt("%.6f", table.ssim[static_cast<size_t>(i - 1)]) + ",\n";
    }
    if (g > m) {
      heat_gaps.push_back(g);
      heat_clips.push_back(clips);
    }
    out << "gap " << g << ": psnr " << fmt("%.3f", table.mean_psnr()) << " ssim " << fmt("%.4f", table.mean_ssim())
        << " range " << fmt("%.3f", table.range()) << '\n';
  }
  if (!heat_gaps.empty()) {
    // One heatmap over every propagated gap, each gap averaged over its own clips.
    Heatmap combined;
    combined.gaps = heat_gaps;
    combined.raw.assign(static_cast<size_t>(m), std::vector<double>(heat_gaps.size(), 0.0));
    for (size_t g = 0; g < heat_gaps.size(); ++g) {
      auto h = flow_heatmap(model, heat_clips[g], {heat_gaps[g]});
      for (int i = 0; i < m; ++i) combined.raw[static_cast<size_t>(i)][g] = h.raw[static_cast<size_t>(i)][0];
    }
    double lo = combined.raw[0][0], hi = lo;
    for (const auto& row : combined.raw) {
      for (double v : row) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (size_t g = 0; g < heat_gaps.size(); ++g) {
      for (int i = 1; i <= m; ++i) {
        const double v = combined.raw[static_cast<size_t>(i - 1)][g];
        report += "heatmap," + std::to_string(heat_gaps[g]) + "," + std::to_string(i) + ",,," +
                  fmt("%.6f", hi > lo ? (v - lo) / (hi - lo) : 0.0) + "\n";
      }
    }
  }
  const fs::path path(a.report);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_text(path, report);
  return kExitOk;
}

// plot -------------------------------------------------------------------------------

struct ReportRow {
  std::string kind;
  int gap = 0;
  int index = 0;
  double psnr = 0.0, z = 0.0;
};

std::vector<ReportRow> read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("kind,gap,index,psnr,ssim,z", 0) != 0) throw IoError(path.string() + ": not an eval report");
  std::vector<ReportRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    cells.resize(6);
    try {
      ReportRow r;
      r.kind = cells[0];
      r.gap = parse_int("gap", cells[1]);
      r.index = cells[2].empty() ? 0 : parse_int("index", cells[2]);
      r.psnr = cells[3].empty() ? 0.0 : parse_real("psnr", cells[3]);
      r.z = cells[5].empty() ? 0.0 : parse_real("z", cells[5]);
      rows.push_back(r);
    } catch (const UsageError& e) {
      throw IoError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

const cv::Scalar kInk(40, 40, 40);

cv::Scalar series_color(size_t k) {
  static const cv::Scalar palette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                                       {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};
  return palette[k % 8];
}

void put(cv::Mat& img, const std::string& text, cv::Point at, double scale = 0.45) {
  cv::putText(img, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, kInk, 1, cv::LINE_AA);
}

cv::Mat plot_timesteps(const std::vector<ReportRow>& rows) {
  std::map<int, std::vector<std::pair<int, double>>> series;
  for (const auto& r : rows) {
    if (r.kind == "timestep") series[r.gap].emplace_back(r.index, r.psnr);
  }
  if (series.empty()) throw UsageError("report has no timestep rows");
  double lo = 1e9, hi = -1e9;
  int max_index = 1;
  for (const auto& [g, pts] : series) {
    for (const auto& [i, p] : pts) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
      max_index = std::max(max_index, i);
    }
  }
  lo = std::floor(lo - 0.5);
  hi = std::ceil(hi + 0.5);
  const int w = 720, h = 480, left = 70, right = 130, top = 40, bottom = 60;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  auto px = [&](double i) { return left + static_cast<int>((i - 1) / std::max(1, max_index - 1) * (w - left - right)); };
  auto py = [&](double p) { return top + static_cast<int>((hi - p) / (hi - lo) * (h - top - bottom)); };
  cv::rectangle(img, {left, top}, {w - right, h - bottom}, kInk, 1);
  for (int k = 0; k <= 5; ++k) {
    const double p = lo + (hi - lo) * k / 5.0;
    put(img, fmt("%.1f", p), {8, py(p) + 4});
    cv::line(img, {left - 4, py(p)}, {left, py(p)}, kInk, 1);
  }
  const int step = std::max(1, max_index / 10);
  for (int i = 1; i <= max_index; i += step) {
    put(img, std::to_string(i), {px(i) - 6, h - bottom + 18});
    cv::line(img, {px(i), h - bottom}, {px(i), h - bottom + 4}, kInk, 1);
  }
  put(img, "time step index", {w / 2 - 60, h - 15}, 0.5);
  put(img, "PSNR (dB)", {8, 25}, 0.5);
  size_t k = 0;
  for (const auto& [g, pts] : series) {
    std::vector<cv::Point> poly;
    for (const auto& [i, p] : pts) poly.emplace_back(px(i), py(p));
    cv::polylines(img, poly, false, series_color(k), 2, cv::LINE_AA);
    for (const auto& q : poly) cv::circle(img, q, 3, series_color(k), cv::FILLED, cv::LINE_AA);
    const int ly = top + 20 + static_cast<int>(k) * 22;
    cv::line(img, {w - right + 12, ly - 4}, {w - right + 36, ly - 4}, series_color(k), 2);
    put(img, "gap " + std::to_string(g), {w - right + 42, ly});
    ++k;
  }
  return img;
}

cv::Mat plot_heatmap(const std::vector<ReportRow>& rows) {
  std::map<int, std::map<int, double>> cells;  // gap -> i -> z
  int max_i = 0;
  for (const auto& r : rows) {
    if (r.kind != "heatmap") continue;
    cells[r.gap][r.index] = r.z;
    max_i = std::max(max_i, r.index);
  }
  if (cells.empty()) throw UsageError("report has no heatmap rows");
  const int cell = 48, left = 60, top = 40;
  const int cols = static_cast<int>(cells.size());
  cv::Mat grid(max_i, cols, CV_8UC1, cv::Scalar(0));
  int c = 0;
  for (const auto& [g, col] : cells) {
    for (const auto& [i, z] : col) grid.at<std::uint8_t>(i - 1, c) = cv::saturate_cast<std::uint8_t>(z * 255.0);
    ++c;
  }
  cv::Mat colored;
  cv::applyColorMap(grid, colored, cv::COLORMAP_VIRIDIS);
  cv::resize(colored, colored, {cols * cell, max_i * cell}, 0, 0, cv::INTER_NEAREST);
  cv::Mat img(top + max_i * cell + 50, left + cols * cell + 30, CV_8UC3, cv::Scalar(255, 255, 255));
  colored.copyTo(img(cv::Rect(left, top, colored.cols, colored.rows)));
  for (int i = 1; i <= max_i; ++i) put(img, std::to_string(i), {left - 24, top + (i - 1) * cell + cell / 2 + 5});
  c = 0;
  for (const auto& [g, col] : cells) put(img, std::to_string(g), {left + c++ * cell + cell / 2 - 8, top + max_i * cell + 20});
  put(img, "gap n", {left + cols * cell / 2 - 20, top + max_i * cell + 42}, 0.5);
  put(img, "i", {10, top + max_i * cell / 2}, 0.5);
  put(img, "z_i (rescaled)", {left, 25}, 0.5);
  return img;
}

struct PlotArgs {
  std::string report, kind, out;
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  if (a.kind != "timesteps" && a.kind != "heatmap") throw UsageError("unknown plot kind '" + a.kind + "'");
  if (!fs::is_regular_file(a.report)) throw IoError("report not found: " + a.report);
  const auto rows = read_report(a.report);
  auto img = a.kind == "timesteps" ? plot_timesteps(rows) : plot_heatmap(rows);
  const fs::path path(a.out);
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write " + path.string());
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

}  // namespace

std::vector<data::ClipSource> synthetic_clips(const std::string& spec) {
  int count = 3, length = 17, size = 64;
  data::SyntheticSpec base;
  if (spec != "default") {
    for (const auto& kv : split(spec, ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--synthetic: expected key=value, got '" + kv + "'");
      const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
      if (key == "clips") count = parse_int(key, value);
      else if (key == "length") length = parse_int(key, value);
      else if (key == "size") size = parse_int(key, value);
      else if (key == "vx") base.vx = parse_real(key, value);
      else if (key == "vy") base.vy = parse_real(key, value);
      else if (key == "rotation") base.rotation = parse_real(key, value);
      else if (key == "seed") base.seed = static_cast<std::uint64_t>(parse_int(key, value));
      else throw UsageError("--synthetic: unknown key '" + key + "'");
    }
  }
  if (count <= 0) throw UsageError("--synthetic: clips must be positive");
  base.width = base.height = size;
  std::vector<data::ClipSource> out;
  try {
    for (int k = 0; k < count; ++k) {
      auto s = base;
      s.seed = base.seed + static_cast<std::uint64_t>(k);
      auto [clip, oracle] = data::generate_synthetic_clip(s, length);
      out.push_back({std::move(clip), std::move(oracle)});
    }
  } catch (const std::logic_error& e) {
    throw UsageError(std::string("--synthetic: ") + e.what());
  }
  return out;
}

std::vector<int> parse_targets(const std::string& text, int gap) {
  std::vector<int> out;
  if (text == "all") {
    for (int i = 1; i < gap; ++i) out.push_back(i);
    return out;
  }
  out = parse_int_list("--targets", text);
  for (int i : out) {
    if (i <= 0 || i >= gap) {
      throw UsageError("--targets: " + std::to_string(i) + " outside (0," + std::to_string(gap) + ")");
    }
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-frame video interpolation by feature propagation"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train from clip directories or synthetic clips");
  train->add_option("--config", ta.config, "key = value configuration file");
  auto* data_opt = train->add_option("--data", ta.data, "Root holding <clip_id>/%06d.png");
  auto* synth_opt = train->add_option("--synthetic", ta.synthetic, "'default' or key=value,... synthetic clip spec");
  data_opt->excludes(synth_opt);
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "Seed for initialization and sampling");
  train->add_option("--epochs-override", ta.epochs_override, "Replace the configured epoch count");

  InterpolateArgs ia;
  auto* interp = app.add_subcommand("interpolate", "Synthesize intermediate frames for one input pair");
  interp->add_option("--checkpoint", ia.checkpoint)->required();
  interp->add_option("--left", ia.left)->required();
  interp->add_option("--right", ia.right)->required();
  interp->add_option("--gap", ia.gap, "Frame gap n between the inputs")->required();
  interp->add_option("--targets", ia.targets, "Comma separated indices in (0,n) or 'all'");
  interp->add_option("--out", ia.out)->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Per-gap and per-timestep PSNR/SSIM plus flow heatmap");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  eval->add_option("--data", ea.data)->required();
  eval->add_option("--gaps", ea.gaps, "Comma separated gaps")->required();
  eval->add_option("--report", ea.report, "CSV report path")->required();

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "Render an eval report");
  plot->add_option("--report", pa.report)->required();
  plot->add_option("--kind", pa.kind, "timesteps | heatmap")->required();
  plot->add_option("--out", pa.out, "PNG path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  ta.seed_set = train->count("--seed") > 0;
  try {
    if (*train) return cmd_train(ta, out);
    if (*interp) return cmd_interpolate(ia, out);
    if (*eval) return cmd_eval(ea, out);
    return cmd_plot(pa, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // usage, config, shape
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::logic_error& e) {  // routing, domain
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run(args, std::cout, std::cerr);
}

}  // namespace pinet::cli
