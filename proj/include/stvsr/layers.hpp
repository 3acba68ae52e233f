#pragma once

#include "stvsr/ops.hpp"
#include "stvsr/params.hpp"

#include <array>
#include <random>
#include <string>

namespace stvsr {

/// How the last layer of a residual branch or fusion projection starts out.
enum class InitMode { zero, random };

template <typename S>
struct Conv2d {
  Tensor<S> weight;  // [Co, Ci, k, k]
  Tensor<S> bias;    // [Co]
  Index padding = 0;

  static Conv2d init(Index in, Index out, Index kernel, std::mt19937_64& rng,
                     InitMode mode = InitMode::random);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

template <typename S>
struct Conv3d {
  Tensor<S> weight;  // [Co, Ci, kt, kh, kw]
  Tensor<S> bias;    // [Co]
  Conv3dOptions options;

  static Conv3d init(Index in, Index out, std::array<Index, 3> kernel, Conv3dOptions options,
                     std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Row-wise affine map of x [L, in] to [L, out].
template <typename S>
struct Linear {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [out]

  static Linear init(Index in, Index out, std::mt19937_64& rng, InitMode mode = InitMode::random);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Per-token RMS normalization of x [L, C] with a learned gain.
template <typename S>
struct RmsNorm {
  Tensor<S> gain;  // [C]

  static RmsNorm init(Index channels);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// x + conv(relu(conv(x))), both 3x3.
template <typename S>
struct ResidualBlock {
  Conv2d<S> first, second;

  static ResidualBlock init(Index channels, std::mt19937_64& rng, InitMode last);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// Gates channels of x [C,H,W] by sigmoid(fc2(relu(fc1(mean over H,W)))).
template <typename S>
struct ChannelAttention {
  Linear<S> squeeze, excite;

  static ChannelAttention init(Index channels, Index reduction, std::mt19937_64& rng);
  Tensor<S> operator()(const Tensor<S>& x) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

/// [C,H,W] feature map to [H*W, C] raster tokens and back.
template <typename S>
Tensor<S> to_tokens(const Tensor<S>& x);
template <typename S>
Tensor<S> from_tokens(const Tensor<S>& tokens, Index h, Index w);

/// Frames [C,H,W] stacked along a new time axis: [C,T,H,W].
template <typename S>
Tensor<S> stack_time(const std::vector<Tensor<S>>& frames);
/// Frame t of x [C,T,H,W] as [C,H,W].
template <typename S>
Tensor<S> time_slice(const Tensor<S>& x, Index t);

}  // namespace stvsr
