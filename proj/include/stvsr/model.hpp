#pragma once

#include "stvsr/blocks.hpp"

#include <cstdint>
#include <vector>

namespace stvsr {

/// n+1 low-resolution frames [3,h,w] in, 2n+1 frames [3,sh,sw] out.
///
/// Features of each input pair are fused into a middle frame, refined against
/// its neighbours, aligned jointly across the sequence, and upsampled.
template <typename S>
struct Model {
  ModelConfig config;
  FeatureExtractor<S> extractor;
  GlobalFusion<S> fusion;
  TemporalRefine<S> refine;
  MultiscaleAlignment<S> alignment;
  Reconstructor<S> reconstructor;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  std::vector<Tensor<S>> operator()(const std::vector<Tensor<S>>& frames) const;
  /// Every learnable tensor with a unique '/'-separated path, in a fixed order.
  ParamList<S> parameters() const;
  /// Throws ShapeError unless `frames` fit this model.
  void check_input(const std::vector<Tensor<S>>& frames) const;
};

}  // namespace stvsr
