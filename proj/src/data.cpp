#include "stvsr/data.hpp"

#include <png.h>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace stvsr {

namespace {

void require_rgb(const Frame& frame, const char* what) {
  if (frame.ndim() != 3 || frame.dim(0) != 3)
    throw ShapeError(std::string(what) + " expects an RGB frame [3,H,W], got " +
                     to_string(frame.shape()));
}

double cubic(double x) {
  constexpr double a = -0.5;
  const double t = std::abs(x);
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0.0;
}

Index reflect(Index j, Index n) {
  const Index period = 2 * n;
  Index m = j % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

Frame read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode " + path.string() + ": " + msg);
  }
  const Index h = image.height, w = image.width;
  Buffer<float> v(3 * h * w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c)
        v((c * h + y) * w + x) = bytes[(y * w + x) * 3 + c] / 255.0f;
  return Frame({3, h, w}, std::move(v));
}

void write_png(const fs::path& path, const Frame& frame) {
  require_rgb(frame, "write_png");
  const Index h = frame.dim(1), w = frame.dim(2);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(3 * h * w));
  const auto& v = frame.values();
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double p = std::clamp<double>(v((c * h + y) * w + x), 0.0, 1.0);
        bytes[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(p * 255.0));
      }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("cannot write " + path.string() + ": " + image.message);
}

Eigen::ArrayXXd luma(const Frame& frame) {
  require_rgb(frame, "luma");
  const Index h = frame.dim(1), w = frame.dim(2);
  const auto& v = frame.values();
  Eigen::ArrayXXd y(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const Index i = r * w + c;
      y(r, c) = 0.299 * v(i) + 0.587 * v(h * w + i) + 0.114 * v(2 * h * w + i);
    }
  return y;
}

bool is_black(const Frame& frame, double threshold) {
  return luma(frame).maxCoeff() <= threshold;
}

std::vector<ResampleTaps> bicubic_taps(Index in_size, Index s) {
  if (s < 1) throw std::invalid_argument("downscale factor must be positive");
  if (in_size % s != 0)
    throw std::invalid_argument("extent " + std::to_string(in_size) +
                                " is not divisible by " + std::to_string(s));
  const Index out_size = in_size / s;
  const double half_width = 2.0 * static_cast<double>(s);
  std::vector<ResampleTaps> taps(static_cast<std::size_t>(out_size));
  for (Index i = 0; i < out_size; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * static_cast<double>(s) - 0.5;
    const Index first = static_cast<Index>(std::floor(center - half_width));
    const Index last = static_cast<Index>(std::ceil(center + half_width));
    auto& t = taps[static_cast<std::size_t>(i)];
    double total = 0.0;
    for (Index j = first; j <= last; ++j) {
      const double w = cubic((center - static_cast<double>(j)) / static_cast<double>(s));
      if (w == 0.0) continue;
      t.index.push_back(reflect(j, in_size));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

Frame bicubic_downscale(const Frame& frame, Index s) {
  require_rgb(frame, "bicubic_downscale");
  const Index h = frame.dim(1), w = frame.dim(2);
  if (h % s != 0 || w % s != 0)
    throw std::invalid_argument("frame " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not divisible by scale " + std::to_string(s));
  const auto rows = bicubic_taps(h, s);
  const auto cols = bicubic_taps(w, s);
  const Index oh = h / s, ow = w / s;
  const auto& v = frame.values();
  Buffer<float> out(3 * oh * ow);
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (Index c = 0; c < 3; ++c) {
    const Index base = c * h * w;
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < ow; ++x) {
        const auto& t = cols[static_cast<std::size_t>(x)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k)
          acc += t.weight[k] * static_cast<double>(v(base + y * w + t.index[k]));
        tmp[static_cast<std::size_t>(y * ow + x)] = acc;
      }
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) {
        const auto& t = rows[static_cast<std::size_t>(y)];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.index.size(); ++k)
          acc += t.weight[k] * tmp[static_cast<std::size_t>(t.index[k] * ow + x)];
        out((c * oh + y) * ow + x) = static_cast<float>(acc);
      }
  }
  return Frame({3, oh, ow}, std::move(out));
}

std::vector<Index> input_frame_indices(Index output_frames) {
  if (output_frames < 3 || output_frames % 2 == 0)
    throw std::invalid_argument("output frame count must be odd and at least 3");
  std::vector<Index> idx;
  for (Index i = 0; i < output_frames; i += 2) idx.push_back(i);
  return idx;
}

std::vector<Index> plan_clips(const std::vector<bool>& usable) {
  std::vector<Index> starts;
  const Index n = static_cast<Index>(usable.size());
  for (Index start = 0; start + kClipLength <= n; start += kClipLength) {
    bool ok = true;
    for (Index i = start; i < start + kClipLength; ++i) ok = ok && usable[static_cast<std::size_t>(i)];
    if (ok) starts.push_back(start);
  }
  return starts;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  std::vector<std::pair<long long, fs::path>> numbered;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    std::size_t end = stem.size();
    std::size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    if (begin == end) continue;
    numbered.emplace_back(std::stoll(stem.substr(begin)), entry.path());
  }
  std::sort(numbered.begin(), numbered.end());
  std::vector<fs::path> out;
  for (auto& [_, p] : numbered) out.push_back(std::move(p));
  return out;
}

std::vector<ClipSeptuplet> clip_extract(const fs::path& frame_dir, const std::string& video) {
  const auto paths = list_frames(frame_dir);
  std::vector<Frame> frames(paths.size());
  std::vector<bool> usable(paths.size(), false);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    try {
      frames[i] = read_png(paths[i]);
      usable[i] = !is_black(frames[i]);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping window of " << paths[i].string() << ": " << e.what() << "\n";
    }
  }
  std::vector<ClipSeptuplet> clips;
  Index number = 0;
  for (Index start : plan_clips(usable)) {
    ClipSeptuplet clip;
    char name[32];
    std::snprintf(name, sizeof name, "%04lld", static_cast<long long>(++number));
    clip.video = video;
    clip.id = video + "/" + name;
    clip.start = start;
    for (Index i = start; i < start + kClipLength; ++i) clip.gt.push_back(frames[static_cast<std::size_t>(i)]);
    clips.push_back(std::move(clip));
  }
  return clips;
}

void degrade(ClipSeptuplet& clip, Index s, Index output_frames) {
  if (s != 2 && s != 4) throw std::invalid_argument("scale must be 2 or 4");
  if (static_cast<Index>(clip.gt.size()) < output_frames)
    throw std::invalid_argument("clip " + clip.id + " has fewer than " +
                                std::to_string(output_frames) + " frames");
  clip.lr.clear();
  for (Index i : input_frame_indices(output_frames))
    clip.lr.push_back(bicubic_downscale(clip.gt[static_cast<std::size_t>(i)], s));
}

double hf_ratio(const Frame& frame, double rho) {
  require_rgb(frame, "hf_ratio");
  const Index h = frame.dim(1), w = frame.dim(2);
  if (h * w < 2) throw std::invalid_argument("hf_ratio needs more than one pixel");
  const Eigen::ArrayXXd y = luma(frame);

  Eigen::FFT<double> fft;
  Eigen::MatrixXcd spectrum(h, w);
  std::vector<double> row_in(static_cast<std::size_t>(w));
  std::vector<std::complex<double>> row_out;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) row_in[static_cast<std::size_t>(c)] = y(r, c);
    fft.fwd(row_out, row_in);
    for (Index c = 0; c < w; ++c) spectrum(r, c) = row_out[static_cast<std::size_t>(c)];
  }
  std::vector<std::complex<double>> col_in(static_cast<std::size_t>(h)), col_out;
  for (Index c = 0; c < w; ++c) {
    for (Index r = 0; r < h; ++r) col_in[static_cast<std::size_t>(r)] = spectrum(r, c);
    fft.fwd(col_out, col_in);
    for (Index r = 0; r < h; ++r) spectrum(r, c) = col_out[static_cast<std::size_t>(r)];
  }

  const double radius = rho * static_cast<double>(std::min(h, w));
  double total = 0.0, high = 0.0;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      if (r == 0 && c == 0) continue;
      const double fy = static_cast<double>(r <= h / 2 ? r : r - h);
      const double fx = static_cast<double>(c <= w / 2 ? c : c - w);
      const double e = std::norm(spectrum(r, c));
      total += e;
      if (std::hypot(fy, fx) > radius) high += e;
    }
  // Round-off leaves ~1e-20 relative energy on flat frames.
  const double dc = std::norm(spectrum(0, 0));
  if (total <= 1e-24 * std::max(1.0, dc)) return 0.0;
  return high / total;
}

double laplacian_variance(const Frame& frame) {
  const Eigen::ArrayXXd y = luma(frame);
  const Index h = y.rows(), w = y.cols();
  if (h < 3 || w < 3) return 0.0;
  const Eigen::ArrayXXd lap = y.block(0, 1, h - 2, w - 2) + y.block(2, 1, h - 2, w - 2) +
                              y.block(1, 0, h - 2, w - 2) + y.block(1, 2, h - 2, w - 2) -
                              4.0 * y.block(1, 1, h - 2, w - 2);
  const double mu = lap.mean();
  return (lap - mu).square().mean();
}

std::string to_string(Tier t) {
  switch (t) {
    case Tier::high: return "High";
    case Tier::medium: return "Medium";
    case Tier::low: return "Low";
  }
  return "?";
}

Tier parse_tier(const std::string& s) {
  if (s == "High") return Tier::high;
  if (s == "Medium") return Tier::medium;
  if (s == "Low") return Tier::low;
  throw std::invalid_argument("unknown tier '" + s + "'");
}

TierThresholds quantile_thresholds(std::vector<double> scores, std::array<double, 3> proportions) {
  const double sum = proportions[0] + proportions[1] + proportions[2];
  if (!(sum > 0) || proportions[0] < 0 || proportions[1] < 0 || proportions[2] < 0)
    throw std::invalid_argument("tier proportions must be non-negative with a positive sum");
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (scores.empty()) return {inf, inf};
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const auto n = static_cast<double>(scores.size());
  const auto n_high = static_cast<std::size_t>(std::llround(n * proportions[0] / sum));
  const auto n_top = static_cast<std::size_t>(std::llround(n * (proportions[0] + proportions[1]) / sum));
  TierThresholds t;
  t.high = n_high == 0 ? inf : scores[n_high - 1];
  t.medium = n_top == 0 ? inf : scores[std::min(n_top, scores.size()) - 1];
  return t;
}

Tier classify(double score, const TierThresholds& t) {
  if (score >= t.high) return Tier::high;
  if (score >= t.medium) return Tier::medium;
  return Tier::low;
}

std::array<std::vector<std::size_t>, 3> stratify(const std::vector<double>& scores,
                                                 const TierThresholds& t) {
  std::array<std::vector<std::size_t>, 3> tiers;
  for (std::size_t i = 0; i < scores.size(); ++i)
    tiers[static_cast<std::size_t>(classify(scores[i], t))].push_back(i);
  return tiers;
}

PrepareSummary prepare(const PrepareOptions& options) {
  if (!fs::is_directory(options.source))
    throw std::invalid_argument("source " + options.source.string() + " is not a directory");
  std::vector<fs::path> videos;
  for (const auto& entry : fs::directory_iterator(options.source))
    if (entry.is_directory()) videos.push_back(entry.path());
  std::sort(videos.begin(), videos.end());

  PrepareSummary summary;
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::ostringstream train, test;
  for (const auto& dir : videos) {
    const std::string video = dir.filename().string();
    ++summary.videos;
    for (auto& clip : clip_extract(dir, video)) {
      const fs::path clip_dir = options.output / "sequences" / clip.id;
      fs::create_directories(clip_dir);
      double score = 0.0;
      for (Index i = 0; i < kClipLength; ++i) {
        write_png(clip_dir / ("im" + std::to_string(i + 1) + ".png"), clip.gt[static_cast<std::size_t>(i)]);
        score += laplacian_variance(clip.gt[static_cast<std::size_t>(i)]);
      }
      const bool is_test = options.test_every > 0 && summary.clips % options.test_every == options.test_every - 1;
      (is_test ? test : train) << clip.id << "\n";
      ++(is_test ? summary.test : summary.train);
      ++summary.clips;
      ids.push_back(clip.id);
      scores.push_back(score / static_cast<double>(kClipLength));
    }
  }

  fs::create_directories(options.output);
  std::ofstream(options.output / "sep_trainlist.txt", std::ios::binary) << train.str();
  std::ofstream(options.output / "sep_testlist.txt", std::ios::binary) << test.str();
  const TierThresholds thresholds = quantile_thresholds(scores, options.tier_proportions);
  std::ofstream tiers(options.output / "tiers.txt", std::ios::binary);
  for (std::size_t i = 0; i < ids.size(); ++i)
    tiers << ids[i] << ' ' << to_string(classify(scores[i], thresholds)) << ' '
          << format_double(scores[i]) << "\n";
  return summary;
}

std::vector<std::string> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<ClipSeptuplet> load_clips(const fs::path& root, const fs::path& manifest) {
  std::vector<ClipSeptuplet> clips;
  for (const auto& id : read_manifest(manifest)) {
    ClipSeptuplet clip;
    clip.id = id;
    clip.video = id.substr(0, id.find('/'));
    for (Index i = 0; i < kClipLength; ++i)
      clip.gt.push_back(read_png(root / "sequences" / id / ("im" + std::to_string(i + 1) + ".png")));
    clips.push_back(std::move(clip));
  }
  return clips;
}

ClipSeptuplet moving_square_clip(Index h, Index w, std::uint64_t seed, Index frames) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double base[3] = {0.2 + 0.3 * unit(rng), 0.2 + 0.3 * unit(rng), 0.2 + 0.3 * unit(rng)};
  const double tilt[3] = {0.2 * unit(rng), 0.2 * unit(rng), 0.2 * unit(rng)};
  const double fg[3] = {0.7 + 0.3 * unit(rng), 0.6 + 0.4 * unit(rng), 0.1 * unit(rng)};
  const Index side = std::max<Index>(2, std::min(h, w) / 4);
  const Index y0 = std::uniform_int_distribution<Index>(0, h - side)(rng);
  const Index x0 = std::uniform_int_distribution<Index>(0, w - side)(rng);
  const Index dy = unit(rng) < 0.5 ? 1 : -1, dx = unit(rng) < 0.5 ? 1 : -1;
  ClipSeptuplet clip;
  clip.id = "synthetic/" + std::to_string(seed);
  clip.video = "synthetic";
  for (Index t = 0; t < frames; ++t) {
    const Index ty = reflect(y0 + dy * t, h - side + 1), tx = reflect(x0 + dx * t, w - side + 1);
    Buffer<float> v(3 * h * w);
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          const bool inside = y >= ty && y < ty + side && x >= tx && x < tx + side;
          const double ramp = base[c] + tilt[c] * (static_cast<double>(x + y) / static_cast<double>(h + w));
          v((c * h + y) * w + x) = static_cast<float>(inside ? fg[c] : ramp);
        }
    clip.gt.emplace_back(Shape{3, h, w}, std::move(v));
  }
  return clip;
}

void write_synthetic_corpus(const fs::path& dir, Index videos, Index frames, Index h, Index w,
                            std::uint64_t seed, const std::vector<Index>& black) {
  Index global = 0;
  for (Index v = 0; v < videos; ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "video%03lld", static_cast<long long>(v + 1));
    const fs::path vdir = dir / name;
    fs::create_directories(vdir);
    const ClipSeptuplet clip = moving_square_clip(h, w, seed + static_cast<std::uint64_t>(v), frames);
    for (Index i = 0; i < frames; ++i, ++global) {
      const bool dark = std::find(black.begin(), black.end(), global) != black.end();
      const Frame& f = clip.gt[static_cast<std::size_t>(i)];
      char file[32];
      std::snprintf(file, sizeof file, "%05lld.png", static_cast<long long>(i + 1));
      write_png(vdir / file, dark ? Frame(f.shape(), Buffer<float>::Zero(f.numel())) : f);
    }
  }
}

HfReport analyze_hf(const fs::path& frame_dir, double rho) {
  HfReport report;
  for (const auto& p : list_frames(frame_dir)) {
    report.frames.push_back(p.filename().string());
    report.ratios.push_back(hf_ratio(read_png(p), rho));
  }
  return report;
}

double HfReport::mean() const {
  if (ratios.empty()) return 0.0;
  double s = 0.0;
  for (double r : ratios) s += r;
  return s / static_cast<double>(ratios.size());
}

void write_hf_csv(const fs::path& path, const HfReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "frame,ratio\n";
  for (std::size_t i = 0; i < report.frames.size(); ++i)
    out << report.frames[i] << ',' << format_double(report.ratios[i]) << "\n";
}

}  // namespace stvsr
