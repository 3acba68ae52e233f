#pragma once

#include "stvsr/data.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stvsr {

/// 10 log10(peak^2 / MSE) with one MSE over all channels (or over BT.601
/// luma when `luma_only`). Identical frames give +infinity.
double psnr(const Frame& a, const Frame& b, double peak = 1.0, bool luma_only = false);

struct SsimOptions {
  Index window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

/// Mean SSIM over every fully contained Gaussian window of the luma planes.
/// Frames narrower than the window use the largest odd window that fits;
/// frames under 8x8 are rejected.
double ssim(const Frame& a, const Frame& b, const SsimOptions& options = {});

/// Normalised 2D Gaussian window, row-major.
std::vector<double> gaussian_window(Index size, double sigma);
/// The window actually used for an h x w frame.
Index ssim_window(Index h, Index w, Index preferred = 11);

struct FrameScore {
  Index frame = 0;  ///< 1-based, as in im<k>.png
  double psnr = 0.0;
  double ssim = 0.0;
  bool synthesized = false;  ///< even 1-based index: no input frame behind it
};

struct ClipReport {
  std::string clip;
  std::string tier = "-";
  std::vector<FrameScore> frames;
  std::string error;  ///< non-empty when the clip could not be scored
};

struct Aggregate {
  Index clips = 0;
  double psnr_avg = 0.0, ssim_avg = 0.0;  ///< over all frames
  double psnr_vfi = 0.0, ssim_vfi = 0.0;  ///< over synthesized frames
  double psnr_input = 0.0, ssim_input = 0.0;
};

/// Per-frame means; a clip's frames are weighted equally across clips.
Aggregate aggregate(const std::vector<ClipReport>& clips);

struct EvalReport {
  std::vector<ClipReport> clips;
  Aggregate overall;
  std::map<std::string, Aggregate> tiers;
};

struct EvalOptions {
  std::filesystem::path pred;  ///< <pred>/<clip>/im1..K.png
  std::filesystem::path gt;    ///< <gt>/sequences/<clip>/... or <gt>/<clip>/...
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> tiers;  ///< defaults to <gt>/tiers.txt when present
  bool luma_psnr = false;
  Index frames = kClipLength;
};

EvalReport evaluate(const EvalOptions& options);
/// Scores one predicted clip against its ground truth.
ClipReport score_clip(const std::string& id, const std::vector<Frame>& pred,
                      const std::vector<Frame>& gt, bool luma_psnr = false);

/// clip,frame,psnr,ssim,set,tier with "inf" for infinite PSNR; a clip that
/// could not be scored gets one row with set=ERROR (the message is in the JSON).
void write_csv(const std::filesystem::path& path, const EvalReport& report);
/// Aggregates and per-frame scores; infinite PSNR becomes null plus psnr_inf=true.
void write_json(const std::filesystem::path& path, const EvalReport& report);
/// tier,clips,psnr_avg,ssim_avg,psnr_vfi,ssim_vfi for external plotting.
void write_plot_data(const std::filesystem::path& path, const EvalReport& report);

/// Reads "<clip> <tier> [score]" lines.
std::map<std::string, std::string> read_tiers(const std::filesystem::path& path);

}  // namespace stvsr
