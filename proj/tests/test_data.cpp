#include "stvsr/data.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <unistd.h>

using namespace stvsr;
using namespace stvsr::testing;

namespace {

Frame constant_frame(Index h, Index w, float r, float g, float b) {
  Buffer<float> v(3 * h * w);
  v.segment(0, h * w).setConstant(r);
  v.segment(h * w, h * w).setConstant(g);
  v.segment(2 * h * w, h * w).setConstant(b);
  return Frame({3, h, w}, v);
}

Frame gray(const Eigen::ArrayXXd& y) {
  const Index h = y.rows(), w = y.cols();
  Buffer<float> v(3 * h * w);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < h; ++r)
      for (Index x = 0; x < w; ++x) v((c * h + r) * w + x) = static_cast<float>(y(r, x));
  return Frame({3, h, w}, v);
}

Frame random_frame(Index h, Index w, std::mt19937_64& rng) {
  return Frame::uniform({3, h, w}, rng, 0.0f, 1.0f);
}

double a_half_cubic(double x) {
  const double t = std::abs(x);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

// Dense 1D resampling matrix built straight from the kernel definition.
Eigen::MatrixXd resample_matrix(Index n, Index s) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n / s, n);
  for (Index i = 0; i < n / s; ++i) {
    const double center = (i + 0.5) * s - 0.5;
    double total = 0;
    for (Index j = -4 * s; j < n + 4 * s; ++j) {
      const double w = a_half_cubic((center - j) / s);
      if (w == 0) continue;
      Index k = j;
      while (k < 0 || k >= n) k = k < 0 ? -k - 1 : 2 * n - 1 - k;
      m(i, k) += w;
      total += w;
    }
    m.row(i) /= total;
  }
  return m;
}

Eigen::ArrayXXd channel(const Frame& f, Index c) {
  const Index h = f.dim(1), w = f.dim(2);
  Eigen::ArrayXXd out(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index x = 0; x < w; ++x) out(r, x) = f.values()((c * h + r) * w + x);
  return out;
}

double direct_dft_ratio(const Eigen::ArrayXXd& y, double rho) {
  const Index h = y.rows(), w = y.cols();
  double total = 0, high = 0;
  for (Index ky = 0; ky < h; ++ky)
    for (Index kx = 0; kx < w; ++kx) {
      if (ky == 0 && kx == 0) continue;
      std::complex<double> acc = 0;
      for (Index r = 0; r < h; ++r)
        for (Index x = 0; x < w; ++x)
          acc += y(r, x) * std::polar(1.0, -2 * std::numbers::pi * (double(ky * r) / h + double(kx * x) / w));
      const double e = std::norm(acc);
      const double fy = ky <= h / 2 ? ky : ky - h;
      const double fx = kx <= w / 2 ? kx : kx - w;
      total += e;
      if (std::sqrt(fy * fy + fx * fx) > rho * std::min(h, w)) high += e;
    }
  return total == 0 ? 0 : high / total;
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

void write_video(const fs::path& dir, Index frames, const std::vector<Index>& black, std::mt19937_64& rng) {
  fs::create_directories(dir);
  for (Index i = 0; i < frames; ++i) {
    const bool dark = std::find(black.begin(), black.end(), i) != black.end();
    const Frame f = dark ? constant_frame(8, 8, 0.02f, 0.02f, 0.02f) : random_frame(8, 8, rng);
    write_png(dir / ("frame" + std::to_string(i + 1) + ".png"), f);
  }
}

}  // namespace

TEST(Png, RoundTripsEightBitValues) {
  TempDir dir("png");
  std::mt19937_64 rng(1);
  Buffer<float> v(3 * 5 * 7);
  std::uniform_int_distribution<int> byte(0, 255);
  for (Index i = 0; i < v.size(); ++i) v(i) = byte(rng) / 255.0f;
  const Frame f({3, 5, 7}, v);
  write_png(dir.path / "a.png", f);
  const Frame g = read_png(dir.path / "a.png");
  ASSERT_EQ(g.shape(), f.shape());
  EXPECT_TRUE(bit_equal(f, g));
}

TEST(Png, MissingFileThrows) {
  EXPECT_THROW(read_png("/nonexistent/x.png"), std::runtime_error);
}

TEST(Luma, Bt601Weights) {
  const Eigen::ArrayXXd y = luma(constant_frame(2, 3, 1.0f, 0.0f, 0.0f));
  EXPECT_NEAR(y(1, 2), 0.299, 1e-7);
  EXPECT_NEAR(luma(constant_frame(1, 1, 0.2f, 0.4f, 0.6f))(0, 0), 0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6, 1e-7);
}

TEST(Bicubic, ConstantStaysConstant) {
  for (Index s : {2, 4}) {
    const Frame lr = bicubic_downscale(constant_frame(16, 24, 0.3f, 0.6f, 0.9f), s);
    ASSERT_EQ(lr.shape(), (Shape{3, 16 / s, 24 / s}));
    for (Index i = 0; i < lr.numel(); ++i) {
      const float expect = i < lr.numel() / 3 ? 0.3f : i < 2 * lr.numel() / 3 ? 0.6f : 0.9f;
      EXPECT_NEAR(lr.at(i), expect, 1e-6);
    }
  }
}

TEST(Bicubic, ShapeAndDivisibility) {
  std::mt19937_64 rng(2);
  EXPECT_EQ(bicubic_downscale(random_frame(64, 64, rng), 2).shape(), (Shape{3, 32, 32}));
  EXPECT_THROW(bicubic_downscale(random_frame(10, 9, rng), 2), std::invalid_argument);
}

TEST(Bicubic, WeightsSumToOneAndTapsInRange) {
  for (Index n : {4, 8, 12, 32})
    for (Index s : {2, 4}) {
      if (n % s) continue;
      for (const auto& t : bicubic_taps(n, s)) {
        double sum = 0;
        for (std::size_t k = 0; k < t.index.size(); ++k) {
          sum += t.weight[k];
          EXPECT_GE(t.index[k], 0);
          EXPECT_LT(t.index[k], n);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
}

TEST(Bicubic, RampMatchesDenseSeparableOracle) {
  for (Index s : {2, 4}) {
    const Index h = 32, w = 48;
    Eigen::ArrayXXd ramp(h, w);
    for (Index r = 0; r < h; ++r)
      for (Index x = 0; x < w; ++x) ramp(r, x) = (0.7 * r + 0.3 * x) / (h + w);
    const Frame lr = bicubic_downscale(gray(ramp), s);
    const Eigen::MatrixXd expect = resample_matrix(h, s) * ramp.matrix() * resample_matrix(w, s).transpose();
    const Eigen::ArrayXXd got = channel(lr, 1);
    EXPECT_LT((got - expect.array()).abs().maxCoeff(), 1e-5) << "s=" << s;
    // Away from the borders a symmetric normalized kernel reproduces a linear
    // function at the sample centre.
    for (Index r = 2; r < h / s - 2; ++r)
      for (Index x = 2; x < w / s - 2; ++x) {
        const double cy = (r + 0.5) * s - 0.5, cx = (x + 0.5) * s - 0.5;
        EXPECT_NEAR(got(r, x), (0.7 * cy + 0.3 * cx) / (h + w), 1e-5);
      }
  }
}

TEST(Bicubic, RandomImageMatchesDenseOracle) {
  std::mt19937_64 rng(3);
  const Frame f = random_frame(16, 20, rng);
  const Frame lr = bicubic_downscale(f, 2);
  for (Index c = 0; c < 3; ++c) {
    const Eigen::MatrixXd expect =
        resample_matrix(16, 2) * channel(f, c).matrix() * resample_matrix(20, 2).transpose();
    EXPECT_LT((channel(lr, c) - expect.array()).abs().maxCoeff(), 1e-5);
  }
}

TEST(ClipPlan, StrideSevenExamples) {
  EXPECT_EQ(plan_clips(std::vector<bool>(20, true)), (std::vector<Index>{0, 7}));
  EXPECT_TRUE(plan_clips(std::vector<bool>(6, true)).empty());
  std::vector<bool> usable(14, true);
  usable[4] = false;  // frame 5
  EXPECT_EQ(plan_clips(usable), (std::vector<Index>{7}));
  EXPECT_TRUE(plan_clips({}).empty());
}

TEST(ClipPlan, WindowsAreDisjointAndAvoidUnusableFrames) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution bad(0.05);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<bool> usable(std::uniform_int_distribution<int>(0, 120)(rng));
    for (std::size_t i = 0; i < usable.size(); ++i) usable[i] = !bad(rng);
    Index prev_end = 0;
    for (Index s : plan_clips(usable)) {
      EXPECT_EQ(s % kClipLength, 0);
      EXPECT_GE(s, prev_end);
      for (Index i = s; i < s + kClipLength; ++i) EXPECT_TRUE(usable[i]);
      prev_end = s + kClipLength;
    }
  }
}

TEST(ClipExtract, ReadsDirectoryAndRejectsBlackFrames) {
  TempDir dir("clips");
  std::mt19937_64 rng(5);
  write_video(dir.path / "v", 14, {4}, rng);
  const auto clips = clip_extract(dir.path / "v", "v");
  ASSERT_EQ(clips.size(), 1u);
  EXPECT_EQ(clips[0].start, 7);
  EXPECT_EQ(clips[0].id, "v/0001");
  EXPECT_EQ(clips[0].gt.size(), 7u);
  for (const auto& f : clips[0].gt) EXPECT_FALSE(is_black(f));
}

TEST(ClipExtract, NumericOrderingAndUnreadableFrames) {
  TempDir dir("order");
  std::mt19937_64 rng(6);
  write_video(dir.path / "v", 20, {}, rng);
  EXPECT_EQ(list_frames(dir.path / "v")[9].filename(), "frame10.png");
  std::ofstream(dir.path / "v" / "frame3.png") << "not a png";
  const auto clips = clip_extract(dir.path / "v", "v");
  ASSERT_EQ(clips.size(), 1u);
  EXPECT_EQ(clips[0].start, 7);
}

TEST(Degrade, SelectsEvenFrames) {
  std::mt19937_64 rng(7);
  ClipSeptuplet clip;
  clip.id = "x";
  for (int i = 0; i < 7; ++i) clip.gt.push_back(random_frame(8, 8, rng));
  degrade(clip, 2);
  ASSERT_EQ(clip.lr.size(), 4u);
  for (int k = 0; k < 4; ++k) EXPECT_TRUE(bit_equal(clip.lr[k], bicubic_downscale(clip.gt[2 * k], 2)));
  degrade(clip, 4, 3);
  EXPECT_EQ(clip.lr.size(), 2u);
  EXPECT_EQ(clip.lr[1].shape(), (Shape{3, 2, 2}));
  EXPECT_THROW(degrade(clip, 3), std::invalid_argument);
  EXPECT_EQ(input_frame_indices(7), (std::vector<Index>{0, 2, 4, 6}));
}

TEST(HfRatio, ConstantIsZero) {
  EXPECT_EQ(hf_ratio(constant_frame(16, 16, 0.4f, 0.4f, 0.4f)), 0.0);
  EXPECT_EQ(hf_ratio(constant_frame(9, 13, 0.1f, 0.7f, 0.2f)), 0.0);
}

TEST(HfRatio, CheckerboardIsOne) {
  for (auto [h, w] : {std::pair<Index, Index>{16, 16}, {8, 12}, {32, 18}}) {
    Eigen::ArrayXXd y(h, w);
    for (Index r = 0; r < h; ++r)
      for (Index x = 0; x < w; ++x) y(r, x) = (r + x) % 2 ? 1.0 : 0.0;
    EXPECT_NEAR(hf_ratio(gray(y)), 1.0, 1e-6);
  }
}

TEST(HfRatio, DegenerateFrameThrows) {
  EXPECT_THROW(hf_ratio(constant_frame(1, 1, 0.5f, 0.5f, 0.5f)), std::invalid_argument);
}

TEST(HfRatio, MatchesDirectDft) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    const Index h = 6 + 3 * trial, w = 16 - trial;
    const Frame f = random_frame(h, w, rng);
    for (double rho : {0.125, 0.3})
      EXPECT_NEAR(hf_ratio(f, rho), direct_dft_ratio(luma(f), rho), 1e-9);
  }
}

TEST(HfRatio, OffsetInvariantAndBounded) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::ArrayXXd y = Eigen::ArrayXXd::Random(24, 24) * 0.2 + 0.4;
    const double base = hf_ratio(gray(y));
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    EXPECT_NEAR(hf_ratio(gray(y + 0.3)), base, 1e-6);
  }
}

TEST(HfRatio, NyquistNoiseDoesNotLowerRatio) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::ArrayXXd y(32, 32);
    // Smooth content plus a little texture.
    const double fx = 0.5 + trial * 0.1, fy = 0.3 + trial * 0.05;
    for (Index r = 0; r < 32; ++r)
      for (Index x = 0; x < 32; ++x)
        y(r, x) = 0.5 + 0.2 * std::sin(fx * x / 4.0) * std::cos(fy * r / 4.0) + 0.01 * n(rng);
    Eigen::ArrayXXd noisy = y;
    for (Index r = 0; r < 32; ++r)
      for (Index x = 0; x < 32; ++x) noisy(r, x) += ((r + x) % 2 ? 0.05 : -0.05) * std::abs(n(rng));
    EXPECT_GE(hf_ratio(gray(noisy)), hf_ratio(gray(y)));
  }
}

TEST(Stratify, QuantilesReproduceProportions) {
  std::vector<double> scores(1141);
  std::mt19937_64 rng(11);
  for (auto& s : scores) s = std::uniform_real_distribution<double>(0, 100)(rng);
  const auto t = quantile_thresholds(scores, {5120, 3150, 3140});
  const auto tiers = stratify(scores, t);
  EXPECT_EQ(tiers[0].size(), 512u);
  EXPECT_EQ(tiers[1].size(), 315u);
  EXPECT_EQ(tiers[2].size(), 314u);
}

TEST(Stratify, DisjointExhaustiveAndEdgeCases) {
  const auto empty = stratify({}, quantile_thresholds({}));
  for (const auto& t : empty) EXPECT_TRUE(t.empty());
  const std::vector<double> same(10, 3.0);
  const auto tiers = stratify(same, quantile_thresholds(same));
  EXPECT_EQ(tiers[0].size(), 10u);
  std::vector<double> mixed{5, 1, 9, 3, 7, 2};
  const auto part = stratify(mixed, {6.0, 2.5});
  std::vector<std::size_t> all;
  for (const auto& t : part) all.insert(all.end(), t.begin(), t.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(part[0], (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(parse_tier(to_string(Tier::medium)), Tier::medium);
}

TEST(Stratify, SharperFramesScoreHigher) {
  std::mt19937_64 rng(12);
  const Frame sharp = random_frame(16, 16, rng);
  const Frame faint({3, 16, 16}, sharp.values() * 0.1f);
  EXPECT_GT(laplacian_variance(sharp), laplacian_variance(faint));
  EXPECT_EQ(laplacian_variance(constant_frame(8, 8, 0.5f, 0.5f, 0.5f)), 0.0);
}

TEST(Prepare, DeterministicManifestAndLayout) {
  TempDir src("prep_src");
  std::mt19937_64 rng(13);
  write_video(src.path / "b", 100, {30}, rng);
  write_video(src.path / "a", 100, {}, rng);
  TempDir out1("prep_out1"), out2("prep_out2");
  PrepareOptions opt{src.path, out1.path, 4, {5120, 3150, 3140}};
  const auto s1 = prepare(opt);
  opt.output = out2.path;
  const auto s2 = prepare(opt);
  EXPECT_EQ(s1.videos, 2);
  EXPECT_EQ(s1.clips, 14 + 13);
  EXPECT_EQ(s1.train + s1.test, s1.clips);
  EXPECT_EQ(s1.test, 6);
  EXPECT_EQ(s2.clips, s1.clips);
  for (const char* f : {"sep_trainlist.txt", "sep_testlist.txt", "tiers.txt"})
    EXPECT_EQ(slurp(out1.path / f), slurp(out2.path / f)) << f;
  const auto train = read_manifest(out1.path / "sep_trainlist.txt");
  EXPECT_EQ(train.front(), "a/0001");
  EXPECT_TRUE(fs::exists(out1.path / "sequences" / "b" / "0013" / "im7.png"));
  const auto clips = load_clips(out1.path, out1.path / "sep_testlist.txt");
  ASSERT_EQ(clips.size(), 6u);
  EXPECT_EQ(clips[0].gt.size(), 7u);
}

TEST(AnalyzeHf, CsvListsEveryFrame) {
  TempDir dir("hf");
  std::mt19937_64 rng(14);
  write_video(dir.path / "v", 3, {}, rng);
  const auto report = analyze_hf(dir.path / "v");
  ASSERT_EQ(report.ratios.size(), 3u);
  write_hf_csv(dir.path / "hf.csv", report);
  const std::string csv = slurp(dir.path / "hf.csv");
  EXPECT_EQ(csv.rfind("frame,ratio\nframe1.png,", 0), 0u);
  EXPECT_GT(report.mean(), 0.0);
}
