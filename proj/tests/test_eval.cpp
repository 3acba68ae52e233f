#include "stvsr/eval.hpp"

#include "metric_oracle.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace stvsr;

namespace {

Frame constant(Index h, Index w, float v) { return Frame::full({3, h, w}, v); }

Frame noise(Index h, Index w, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  return Frame::uniform({3, h, w}, rng, lo, hi);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("stvsr_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_clip(const fs::path& dir, const std::vector<Frame>& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) write_png(dir / ("im" + std::to_string(i + 1) + ".png"), frames[i]);
}

}  // namespace

TEST(Psnr, Examples) {
  std::mt19937_64 rng(1);
  const Frame a = noise(8, 8, rng);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(constant(4, 4, 0.0f), constant(4, 4, 1.0f)), 0.0, 1e-12);
  const Frame b = noise(8, 8, rng, 0.2f, 0.8f);
  const Frame c(b.shape(), b.values() + 0.1f);
  EXPECT_NEAR(psnr(b, c), 20.0, 1e-5);
  EXPECT_THROW(psnr(a, constant(8, 9, 0.0f)), ShapeError);
}

TEST(Psnr, SymmetricAndMatchesOracle) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const Frame a = noise(9, 13, rng), b = noise(9, 13, rng);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_NEAR(psnr(a, b), oracle::psnr(a, b), 1e-9);
    EXPECT_NEAR(psnr(a, b, 1.0, true), oracle::psnr(a, b, true), 1e-9);
  }
}

TEST(Ssim, IdentityAndSymmetry) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    const Frame a = noise(16, 20, rng), b = noise(16, 20, rng);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
    EXPECT_GE(ssim(a, b), -1.0);
    EXPECT_LE(ssim(a, b), 1.0);
  }
}

TEST(Ssim, InvertedNoiseIsNegative) {
  std::mt19937_64 rng(4);
  const Frame a = noise(24, 24, rng, 0.3f, 0.7f);
  const Frame inv(a.shape(), 1.0f - a.values());
  EXPECT_LT(ssim(a, inv), 0.0);
  EXPECT_NEAR(ssim(a, inv), oracle::ssim(a, inv), 1e-9);
}

TEST(Ssim, ConstantFramesReduceToLuminanceTerm) {
  const double ma = 0.3, mb = 0.7, c1 = 1e-4;
  EXPECT_NEAR(ssim(constant(12, 12, 0.3f), constant(12, 12, 0.7f)),
              (2 * ma * mb + c1) / (ma * ma + mb * mb + c1), 1e-6);
}

TEST(Ssim, SmallFramesShrinkWindowAndTinyFramesFail) {
  EXPECT_EQ(ssim_window(64, 64), 11);
  EXPECT_EQ(ssim_window(8, 30), 7);
  EXPECT_EQ(ssim_window(9, 10), 9);
  EXPECT_THROW(ssim_window(7, 30), std::invalid_argument);
  std::mt19937_64 rng(5);
  const Frame a = noise(8, 10, rng), b = noise(8, 10, rng);
  EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-9);
  EXPECT_THROW(ssim(noise(6, 6, rng), noise(6, 6, rng)), std::invalid_argument);
}

TEST(Ssim, WindowIsNormalisedGaussian) {
  const auto g = gaussian_window(11, 1.5);
  double sum = 0;
  for (double v : g) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_NEAR(g[5 * 11 + 5] / g[5 * 11 + 6], std::exp(1.0 / (2 * 2.25)), 1e-12);
}

TEST(Ssim, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 8; ++i) {
    const Frame a = noise(12 + i, 16, rng);
    const Frame b(a.shape(), (a.values() + Frame::randn(a.shape(), rng, 0.05f).values()).cwiseMax(0.0f).cwiseMin(1.0f));
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-9);
  }
}

TEST(Aggregate, AvgIsWeightedInputAndVfiMeans) {
  std::mt19937_64 rng(7);
  std::vector<Frame> gt, pred;
  for (int i = 0; i < 7; ++i) {
    gt.push_back(noise(8, 8, rng));
    pred.push_back(Frame(gt.back().shape(), (gt.back().values() + 0.01f * (i + 1)).cwiseMin(1.0f)));
  }
  const ClipReport r = score_clip("c", pred, gt);
  ASSERT_EQ(r.frames.size(), 7u);
  for (const auto& f : r.frames) EXPECT_EQ(f.synthesized, f.frame % 2 == 0);
  const Aggregate a = aggregate({r});
  EXPECT_NEAR(a.psnr_avg, (4 * a.psnr_input + 3 * a.psnr_vfi) / 7, 1e-9);
  EXPECT_NEAR(a.ssim_avg, (4 * a.ssim_input + 3 * a.ssim_vfi) / 7, 1e-9);
}

TEST(Evaluate, PerfectPredictionsAndMissingClips) {
  TempDir dir("eval");
  std::mt19937_64 rng(8);
  std::vector<Frame> clip1, clip2;
  for (int i = 0; i < 7; ++i) {
    clip1.push_back(noise(8, 8, rng));
    clip2.push_back(noise(8, 8, rng));
  }
  write_clip(dir.path / "gt" / "sequences" / "v" / "0001", clip1);
  write_clip(dir.path / "gt" / "sequences" / "v" / "0002", clip2);
  write_clip(dir.path / "pred" / "v" / "0001", clip1);
  std::ofstream(dir.path / "list.txt") << "v/0001\nv/0002\n";
  std::ofstream(dir.path / "gt" / "tiers.txt") << "v/0001 High 3.5\nv/0002 Low 1.0\n";

  const EvalReport report = evaluate({dir.path / "pred", dir.path / "gt", dir.path / "list.txt", {}, false, 7});
  ASSERT_EQ(report.clips.size(), 2u);
  EXPECT_TRUE(report.clips[0].error.empty());
  for (const auto& f : report.clips[0].frames) {
    EXPECT_TRUE(std::isinf(f.psnr));
    EXPECT_NEAR(f.ssim, 1.0, 1e-9);
  }
  EXPECT_EQ(report.clips[0].tier, "High");
  EXPECT_FALSE(report.clips[1].error.empty());
  EXPECT_EQ(report.overall.clips, 1);

  write_csv(dir.path / "r.csv", report);
  write_json(dir.path / "r.json", report);
  write_plot_data(dir.path / "r_plot.csv", report);
  const std::string csv = slurp(dir.path / "r.csv");
  EXPECT_EQ(csv.rfind("clip,frame,psnr,ssim,set,tier\nv/0001,1,inf,1.000000,AVG,High\nv/0001,2,inf,1.000000,VFI,High\n", 0), 0u);
  EXPECT_NE(csv.find("v/0002,,,,ERROR,"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir.path / "r.json"));
  EXPECT_TRUE(j["clips"][0]["frames"][0]["psnr"].is_null());
  EXPECT_TRUE(j["clips"][0]["frames"][0]["psnr_inf"].get<bool>());
  EXPECT_TRUE(j["clips"][1].contains("error"));
  EXPECT_EQ(j["tiers"]["High"]["clips"].get<int>(), 1);
  EXPECT_NE(slurp(dir.path / "r_plot.csv").find("High,1,inf,1.000000,inf,1.000000"), std::string::npos);

  // Deterministic output.
  write_csv(dir.path / "r2.csv", evaluate({dir.path / "pred", dir.path / "gt", dir.path / "list.txt", {}, false, 7}));
  EXPECT_EQ(slurp(dir.path / "r2.csv"), csv);
}
