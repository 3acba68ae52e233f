#pragma once

#include "stvsr/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stvsr {

namespace fs = std::filesystem;

/// RGB frames are Tensorf [3,H,W] with values in [0,1].
using Frame = Tensorf;

constexpr Index kClipLength = 7;
constexpr double kBlackThreshold = 16.0 / 255.0;

/// Reads any PNG as 8-bit RGB. Throws std::runtime_error on failure.
Frame read_png(const fs::path& path);
/// Writes [3,H,W] as 8-bit RGB, rounding and clamping to [0,255].
void write_png(const fs::path& path, const Frame& frame);

/// BT.601 luma, Y = 0.299 R + 0.587 G + 0.114 B, as a row-major H x W array.
Eigen::ArrayXXd luma(const Frame& frame);

/// True when the frame's maximum luma is at most `threshold`.
bool is_black(const Frame& frame, double threshold = kBlackThreshold);

/// Bicubic (a = -0.5) downscale by integer factor s with the kernel widened by
/// s for antialiasing and symmetric edge handling. H and W must divide by s.
Frame bicubic_downscale(const Frame& frame, Index s);

/// Weights and source taps of one output sample of the 1D bicubic resampler;
/// taps are already reflected into [0, n).
struct ResampleTaps {
  std::vector<Index> index;
  std::vector<double> weight;  // sums to 1
};
std::vector<ResampleTaps> bicubic_taps(Index in_size, Index s);

/// Frames fed to the network: 0-based even indices {0, 2, ...}.
std::vector<Index> input_frame_indices(Index output_frames);

struct ClipSeptuplet {
  std::string id;     ///< "<video>/<clip>"
  std::string video;
  Index start = 0;    ///< 0-based index of the first frame in the source video
  std::vector<Frame> gt;
  std::vector<Frame> lr;
};

/// Start indices of non-overlapping 7-frame windows over `usable.size()`
/// frames, skipping any window containing an unusable (black or unreadable) frame.
std::vector<Index> plan_clips(const std::vector<bool>& usable);

/// Numbered image files in `dir`, ordered by the number in their stem.
std::vector<fs::path> list_frames(const fs::path& dir);

/// Loads every frame of one video directory and cuts it into clips.
/// Unreadable frames drop their window with a warning on stderr.
std::vector<ClipSeptuplet> clip_extract(const fs::path& frame_dir, const std::string& video);

/// Fills clip.lr with bicubic downscales of the input frames of the first
/// `output_frames` ground-truth frames.
void degrade(ClipSeptuplet& clip, Index s, Index output_frames = kClipLength);

/// Fraction of AC spectral energy of the luma outside the disk of radius
/// rho * min(H, W) (in DFT bins around DC). A frame without AC energy gives 0.
double hf_ratio(const Frame& frame, double rho = 0.125);

struct HfReport {
  std::vector<std::string> frames;
  std::vector<double> ratios;
  double mean() const;
};
HfReport analyze_hf(const fs::path& frame_dir, double rho = 0.125);
/// CSV with header `frame,ratio`.
void write_hf_csv(const fs::path& path, const HfReport& report);

/// Variance of the 4-neighbour luma Laplacian over interior pixels.
double laplacian_variance(const Frame& frame);

enum class Tier { high, medium, low };
std::string to_string(Tier t);
Tier parse_tier(const std::string& s);

/// score >= high -> High; score >= medium -> Medium; otherwise Low.
struct TierThresholds {
  double high = 0.0;
  double medium = 0.0;
};

/// Thresholds placing the top proportions[0] share of scores in High and the
/// next proportions[1] share in Medium (proportions need not sum to 1).
TierThresholds quantile_thresholds(std::vector<double> scores,
                                   std::array<double, 3> proportions = {5120, 3150, 3140});
Tier classify(double score, const TierThresholds& t);
/// Indices of `scores` per tier, in High, Medium, Low order.
std::array<std::vector<std::size_t>, 3> stratify(const std::vector<double>& scores,
                                                 const TierThresholds& t);

struct PrepareOptions {
  fs::path source;  ///< one sub-directory of numbered frames per video
  fs::path output;
  Index test_every = 10;  ///< every k-th clip (by global order) goes to the test list
  std::array<double, 3> tier_proportions = {5120, 3150, 3140};
};

struct PrepareSummary {
  Index videos = 0;
  Index clips = 0;
  Index train = 0;
  Index test = 0;
};

/// Writes <output>/sequences/<video>/<clip>/im1..7.png, sep_trainlist.txt,
/// sep_testlist.txt and tiers.txt (clip id, tier, score).
PrepareSummary prepare(const PrepareOptions& options);

/// A bright square sliding one pixel per frame over a smooth colour ramp.
/// Different seeds change the colours, start position and direction.
ClipSeptuplet moving_square_clip(Index h, Index w, std::uint64_t seed, Index frames = kClipLength);

/// Writes `videos` directories of `frames` numbered PNGs built from moving
/// squares; frames at the listed global indices are made black.
void write_synthetic_corpus(const fs::path& dir, Index videos, Index frames, Index h, Index w,
                            std::uint64_t seed, const std::vector<Index>& black = {});

/// Reads the clips named in a manifest under <root>/sequences.
std::vector<ClipSeptuplet> load_clips(const fs::path& root, const fs::path& manifest);
/// Clip ids of a manifest, in file order.
std::vector<std::string> read_manifest(const fs::path& manifest);

}  // namespace stvsr
