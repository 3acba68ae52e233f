#pragma once

#include "stvsr/layers.hpp"
#include "stvsr/sequencing.hpp"
#include "stvsr/ssm.hpp"

#include <optional>
#include <vector>

namespace stvsr {

/// Architecture hyperparameters shared by every block.
struct ModelConfig {
  Index channels = 64;
  Index scale = 2;
  Index input_frames = 4;
  Index pyramid_levels = 3;
  Index d_state = 16;
  Index expand = 2;
  Index registers = 4;
  bool use_registers = true;
  bool use_spe = true;
  FrequencyRule spe_rule = FrequencyRule::scaled;
  Index residual_blocks = 5;
  Index attention_reduction = 4;
  InitMode init = InitMode::zero;
  bool tie_gfm_branches = false;
  ScanAlgorithm scan = ScanAlgorithm::parallel;

  Index output_frames() const { return 2 * input_frames - 1; }
  Index inner() const { return expand * channels; }
  /// Throws std::invalid_argument on an unusable combination.
  void validate() const;
};

/// 3x3 conv to C channels, then residual blocks.
template <typename S>
struct FeatureExtractor {
  Conv2d<S> head;
  std::vector<ResidualBlock<S>> body;

  static FeatureExtractor init(const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& frame) const;  // [3,H,W] -> [C,H,W]
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Gated bidirectional selective-scan mixer on tokens [L, C].
template <typename S>
struct SelectiveMixer {
  Linear<S> in_proj;  // C -> 2E (scan input, gate)
  SsmParams<S> forward, backward;
  Linear<S> out_proj;  // E -> C
  ScanAlgorithm scan = ScanAlgorithm::parallel;

  static SelectiveMixer init(const ModelConfig& cfg, std::mt19937_64& rng);
  /// `state` of the result is the forward scan's final state.
  ScanResult<S> operator()(const Tensor<S>& tokens, const std::optional<SsmState<S>>& h0) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Register-augmented block over frame-major raster tokens [T*h*w, C].
///
/// out = remove_registers(X + mixer(spe(norm(X)))), X = insert_registers(x) + tpe.
template <typename S>
struct MambaVrBlock {
  RmsNorm<S> norm;
  SelectiveMixer<S> mixer;
  Tensor<S> registers;  // [n, C]; empty when registers are off
  TemporalPositionEmbedding<S> tpe;
  bool use_registers = true;
  bool use_spe = true;
  FrequencyRule spe_rule = FrequencyRule::scaled;

  static MambaVrBlock init(const ModelConfig& cfg, Index max_frames, std::mt19937_64& rng);
  ScanResult<S> operator()(const Tensor<S>& tokens, Index frames, Index h, Index w,
                           const std::optional<SsmState<S>>& h0 = std::nullopt) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Plain raster block: x + mixer(norm(x)), scan seeded with an external state.
template <typename S>
struct VimBlock {
  RmsNorm<S> norm;
  SelectiveMixer<S> mixer;

  static VimBlock init(const ModelConfig& cfg, std::mt19937_64& rng);
  ScanResult<S> operator()(const Tensor<S>& tokens,
                           const std::optional<SsmState<S>>& h0 = std::nullopt) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Offset estimator for one pyramid level: interleaves two frames' tokens,
/// scans them in four directions, and projects the paired outputs to C.
template <typename S>
struct MasmMixer {
  Linear<S> in_proj;  // C -> 2E
  std::array<SsmParams<S>, 4> directions;
  Linear<S> offset;  // 2E -> C
  ScanAlgorithm scan = ScanAlgorithm::parallel;

  static MasmMixer init(const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& prev, const Tensor<S>& next) const;  // [C,h,w] each
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Multiscale prediction of the middle frame's features from (prev, next).
template <typename S>
struct FusionPyramid {
  std::vector<MasmMixer<S>> offsets;  // per level, level 0 at full resolution
  std::vector<Conv2d<S>> fuse;        // per level: [offset; next] -> C
  std::vector<Conv2d<S>> merge;       // per level below the top: [up(coarse); fine] -> C

  static FusionPyramid init(const ModelConfig& cfg, std::mt19937_64& rng);
  Index levels() const { return static_cast<Index>(offsets.size()); }
  /// Level predictions, finest first, before the coarse-to-fine merge.
  std::vector<Tensor<S>> level_predictions(const Tensor<S>& prev, const Tensor<S>& next) const;
  Tensor<S> operator()(const Tensor<S>& prev, const Tensor<S>& next) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Forward and backward pyramid predictions blended by a 1x1 conv.
template <typename S>
struct GlobalFusion {
  FusionPyramid<S> forward, backward;
  Conv2d<S> blend;  // 2C -> C, 1x1
  bool tied = false;

  static GlobalFusion init(const ModelConfig& cfg, std::mt19937_64& rng);
  const FusionPyramid<S>& backward_branch() const { return tied ? forward : backward; }
  Tensor<S> operator()(const Tensor<S>& prev, const Tensor<S>& next) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Refines a synthesized frame with a 3D conv over (prev, mid, next).
template <typename S>
struct TemporalRefine {
  Conv3d<S> motion;  // C -> C, 3x3x3, time-preserving
  Conv2d<S> blend1;  // 6C -> C
  Conv2d<S> blend2;  // C -> C, zero-init under InitMode::zero

  static TemporalRefine init(const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& prev, const Tensor<S>& mid, const Tensor<S>& next) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Index of the 3-frame window (stride 2) frame i is most central in; ties
/// go to the later window.
Index short_term_window(Index frames, Index i);

/// Global, short-term and state-guided alignment over a 2n+1 frame sequence.
template <typename S>
struct MultiscaleAlignment {
  Conv3d<S> patch_embed;  // 1x2x2, stride (1,2,2)
  MambaVrBlock<S> global;
  std::vector<MambaVrBlock<S>> windows;
  VimBlock<S> guided;
  ChannelAttention<S> attention;  // over 3C
  Conv2d<S> project;              // 3C -> C, 1x1
  Conv2d<S> skip;                 // C -> C, 3x3

  static MultiscaleAlignment init(const ModelConfig& cfg, Index frames, std::mt19937_64& rng);
  std::vector<Tensor<S>> operator()(const std::vector<Tensor<S>>& frames) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Residual blocks, conv to C*s^2, pixel shuffle, conv to RGB.
template <typename S>
struct Reconstructor {
  std::vector<ResidualBlock<S>> body;
  Conv2d<S> expand;
  Conv2d<S> to_rgb;
  Index scale = 2;

  static Reconstructor init(const ModelConfig& cfg, std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& features) const;  // [C,H,W] -> [3,sH,sW]
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

}  // namespace stvsr
