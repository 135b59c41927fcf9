#include "pinet/cli.hpp"
#include "pinet/flo_io.hpp"
#include "pinet/scheduler.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace pinet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyConfig =
    "encoder.base_channels = 4\n"
    "flow.radius = 1\n"
    "flow.widths = 4\n"
    "inet.width = 4\n"
    "train.epochs = 2\n"
    "train.batch = 1\n"
    "train.staged_epochs = 1\n"
    "train.milestones = 1\n"
    "train.keep_checkpoints = 0\n"
    "sampling.resize_width = 32\n"
    "sampling.resize_height = 32\n"
    "sampling.crop_width = 32\n"
    "sampling.crop_height = 32\n";

// One tiny trained model and a clip root shared by the tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("pinet_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.cfg") << kTinyConfig;
    auto r = run({"train", "--config", (root_ / "tiny.cfg").string(), "--synthetic",
                  "clips=1,length=31,size=64,vx=0.5", "--out", (root_ / "run").string(), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto clips = cli::synthetic_clips("clips=2,length=31,size=64,vx=0.5,seed=10");
    for (size_t k = 0; k < clips.size(); ++k) {
      data::save_clip(root_ / "clips" / ("clip" + std::to_string(k)), clips[k].clip);
    }
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path ckpt() { return root_ / "run" / "final.ckpt"; }
  static fs::path frame(int k) { return root_ / "clips" / "clip0" / data::frame_file_name(k); }

  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST(CliParse, TargetsAndSyntheticSpecs) {
  EXPECT_EQ(cli::parse_targets("all", 4), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(cli::parse_targets("3,1", 8), (std::vector<int>{3, 1}));
  EXPECT_THROW(cli::parse_targets("8", 8), std::invalid_argument);
  EXPECT_THROW(cli::parse_targets("x", 8), std::invalid_argument);
  auto d = cli::synthetic_clips("default");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].clip.length(), 17);
  EXPECT_EQ(d[0].clip.frames[0].width(), 64);
  EXPECT_EQ(cli::synthetic_clips("clips=1,length=9,size=32,vx=0.5").front().clip.frames[0].width(), 32);
  EXPECT_THROW(cli::synthetic_clips("speed=3"), std::invalid_argument);
}

TEST(CliParse, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--synthetic", "default"}).code, cli::kExitUsage);  // no --out
  EXPECT_EQ(run({"train", "--out", "/tmp/x"}).code, cli::kExitUsage);          // no data source
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
}

TEST_F(CliTest, TrainWritesCheckpointsAndLosses) {
  EXPECT_TRUE(fs::exists(root_ / "run" / "epoch_0001.ckpt"));
  EXPECT_TRUE(fs::exists(root_ / "run" / "epoch_0002.ckpt"));
  EXPECT_TRUE(fs::exists(ckpt()));
  EXPECT_EQ(slurp(root_ / "run" / "config.txt").find("encoder.base_channels = 4"), 0u);
  auto losses = slurp(root_ / "run" / "losses.csv");
  EXPECT_EQ(std::count(losses.begin(), losses.end(), '\n'), 3);
}

TEST_F(CliTest, SameSeedGivesIdenticalCheckpoint) {
  auto r = run({"train", "--config", (root_ / "tiny.cfg").string(), "--synthetic", "clips=1,length=31,size=64,vx=0.5",
                "--out", (root_ / "run2").string(), "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(root_ / "run2" / "final.ckpt"), slurp(ckpt()));
  EXPECT_EQ(slurp(root_ / "run2" / "losses.csv"), slurp(root_ / "run" / "losses.csv"));
}

TEST_F(CliTest, SyntheticDefaultSmoke) {
  auto out = root_ / "smoke";
  auto r = run({"train", "--synthetic", "default", "--epochs-override", "1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "epoch_0001.ckpt"));
  EXPECT_FALSE(fs::exists(out / "epoch_0002.ckpt"));
}

TEST_F(CliTest, BadConfigKeyExitsTwoNamingTheKey) {
  std::ofstream(root_ / "bad.cfg") << "train.speed = 3\n";
  auto r = run({"train", "--config", (root_ / "bad.cfg").string(), "--synthetic", "default", "--out",
                (root_ / "bad").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("train.speed"), std::string::npos);
}

TEST_F(CliTest, UnreadableDataExitsThree) {
  auto r = run({"train", "--config", (root_ / "tiny.cfg").string(), "--data", "/nonexistent/pinet", "--out",
                (root_ / "nodata").string()});
  EXPECT_EQ(r.code, cli::kExitIo);
}

TEST_F(CliTest, InterpolateSmallGapRoutesEverythingToInterpolation) {
  auto out = root_ / "interp8";
  auto r = run({"interpolate", "--checkpoint", ckpt().string(), "--left", frame(0).string(), "--right",
                frame(8).string(), "--gap", "8", "--targets", "all", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 1; i < 8; ++i) EXPECT_TRUE(fs::exists(out / data::frame_file_name(i)));
  auto routes = slurp(out / "routes.csv");
  EXPECT_EQ(std::count(routes.begin(), routes.end(), '\n'), 8);
  size_t interp = 0;
  for (size_t p = routes.find("INTERP"); p != std::string::npos; p = routes.find("INTERP", p + 1)) ++interp;
  EXPECT_EQ(interp, 7u);
}

TEST_F(CliTest, InterpolateGapTwelveReport) {
  // The tiny model keeps the default M = 8.
  auto out = root_ / "interp12";
  auto r = run({"interpolate", "--checkpoint", ckpt().string(), "--left", frame(0).string(), "--right",
                frame(12).string(), "--gap", "12", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string expect = "target,mode\n";
  for (int i = 1; i < 12; ++i) expect += std::to_string(i) + "," + std::string(to_string(route(12, i, {}))) + "\n";
  EXPECT_EQ(slurp(out / "routes.csv"), expect);
  EXPECT_NE(expect.find("2,PROP_LEFT"), std::string::npos);
  EXPECT_NE(expect.find("9,PROP_BOTH_INTERP"), std::string::npos);
  EXPECT_NE(expect.find("10,PROP_RIGHT"), std::string::npos);
}

TEST_F(CliTest, InterpolateErrors) {
  auto base = std::vector<std::string>{"interpolate", "--left", frame(0).string(), "--right", frame(8).string(),
                                       "--out", (root_ / "err").string()};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args).code;
  };
  EXPECT_EQ(with({"--checkpoint", (root_ / "missing.ckpt").string(), "--gap", "8"}), cli::kExitIo);
  EXPECT_EQ(with({"--checkpoint", ckpt().string(), "--gap", "8", "--targets", "9"}), cli::kExitUsage);
  EXPECT_EQ(with({"--checkpoint", ckpt().string(), "--gap", "1"}), cli::kExitUsage);
}

TEST_F(CliTest, EvalAndPlot) {
  const auto report = root_ / "report.csv";
  auto args = std::vector<std::string>{"eval", "--checkpoint", ckpt().string(), "--data", (root_ / "clips").string(),
                                       "--gaps", "8,16,30", "--report", report.string()};
  auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  auto text = slurp(report);
  size_t gap_rows = 0;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) gap_rows += line.rfind("gap,", 0) == 0;
  EXPECT_EQ(gap_rows, 3u);
  EXPECT_NE(text.find("heatmap,16,1,"), std::string::npos);

  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(report), text);

  for (const std::string kind : {"timesteps", "heatmap"}) {
    auto png = root_ / ("plot_" + kind + ".png");
    ASSERT_EQ(run({"plot", "--report", report.string(), "--kind", kind, "--out", png.string()}).code, 0);
    EXPECT_GT(fs::file_size(png), 0u);
  }
  EXPECT_EQ(run({"plot", "--report", report.string(), "--kind", "pie", "--out", (root_ / "p.png").string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"plot", "--report", (root_ / "none.csv").string(), "--kind", "heatmap", "--out",
                 (root_ / "p.png").string()})
                .code,
            cli::kExitIo);
}
