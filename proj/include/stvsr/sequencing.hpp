#pragma once

#include "stvsr/ops.hpp"
#include "stvsr/params.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

namespace stvsr {

enum class ScanDirection { row_forward, row_backward, col_forward, col_backward };

std::string to_string(ScanDirection d);

/// A token permutation: scanned[i] = tokens[forward[i]].
struct ScanOrder {
  std::vector<Index> forward;
  std::vector<Index> inverse;
  ScanDirection direction = ScanDirection::row_forward;

  static ScanOrder from_forward(std::vector<Index> forward, ScanDirection direction);
  Index size() const { return static_cast<Index>(forward.size()); }
};

/// Four interleaved orders over a frame pair laid out as [A tokens; B tokens],
/// each frame h*w in raster order. Every order visits spatial positions in its
/// direction and emits the A token before the B token at each position.
std::array<ScanOrder, 4> masm_orders(Index h, Index w);

/// Raster order over one h*w frame (the identity permutation).
ScanOrder vim_order(Index h, Index w);

/// Slots for register tokens in a sequence of `content_len` content tokens.
///
/// Register j (1-based) sits after min(j * ceil(L/n), L) content tokens, so
/// with L=9, n=3 the augmented positions are 3, 7, 11. `source` maps every
/// augmented slot to a content index (>= 0) or a register vector (-1 - k).
struct RegisterLayout {
  Index content_len = 0;
  Index register_count = 0;
  Index distinct_registers = 0;  ///< rows of the register table
  std::vector<Index> positions;  ///< strictly increasing, in [0, L+n)
  std::vector<Index> source;     ///< length L+n

  Index total_len() const { return content_len + register_count; }

  static RegisterLayout uniform(Index content_len, Index registers);
  /// `frames` consecutive copies of a per-frame layout; every frame reuses the
  /// same register vectors.
  static RegisterLayout per_frame(Index frames, Index frame_len, Index registers);
};

/// Returns [L+n, C]: content rows of x in order, register rows from r [k, C].
template <typename S>
Tensor<S> insert_registers(const Tensor<S>& x, const RegisterLayout& layout, const Tensor<S>& r);

/// Drops register slots; exact inverse of insert_registers on content rows.
template <typename S>
Tensor<S> remove_registers(const Tensor<S>& x, const RegisterLayout& layout);

/// Geometry of one token in a (possibly register-augmented) sequence.
struct TokenSite {
  bool is_register = false;
  Index t = 0;   ///< frame index
  Index u = -1;  ///< row; content tokens need u, v >= 0
  Index v = -1;  ///< column
};

/// Raster sites for `frames` frames of h*w tokens, registers placed per `layout`
/// (which must come from RegisterLayout::per_frame with the same geometry).
/// Registers take their frame's time index.
std::vector<TokenSite> frame_sites(Index frames, Index h, Index w, const RegisterLayout& layout);
std::vector<TokenSite> frame_sites(Index frames, Index h, Index w);

enum class FrequencyRule {
  scaled,   ///< w_i = pi * i / 2
  floored,  ///< w_i = floor(pi * i / 2)
};

/// Rotary angles for an h*w grid with d channels (d % 4 == 0).
///
/// Channel pair p < d/4 rotates by u * w_{p+1}; pair p >= d/4 by v * w_{p-d/4+1}.
class SpatialPositionEncoding {
 public:
  SpatialPositionEncoding(Index h, Index w, Index d, FrequencyRule rule = FrequencyRule::scaled);

  Index height() const { return h_; }
  Index width() const { return w_; }
  Index channels() const { return d_; }
  const std::vector<double>& frequencies() const { return omega_; }
  /// Angle of channel pair `pair` at (u, v).
  double angle(Index u, Index v, Index pair) const;

 private:
  Index h_, w_, d_;
  std::vector<double> omega_;  // d/4 entries
};

SpatialPositionEncoding build_spe(Index h, Index w, Index d,
                                  FrequencyRule rule = FrequencyRule::scaled);

/// Rotates each content token's channel pairs by its (u, v) angles; register
/// tokens pass through unchanged.
template <typename S>
Tensor<S> apply_spe(const Tensor<S>& x, const std::vector<TokenSite>& sites,
                    const SpatialPositionEncoding& spe);

/// Learned per-frame offsets P [T_max, C], added to every token of frame t.
template <typename S>
struct TemporalPositionEmbedding {
  Tensor<S> table;

  static TemporalPositionEmbedding init(Index max_frames, Index channels, std::mt19937_64& rng);
  Tensor<S> apply(const Tensor<S>& x, const std::vector<TokenSite>& sites) const;
  void collect(ParamList<S>& out, const std::string& prefix) const;
};

}  // namespace stvsr
