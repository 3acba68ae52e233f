#pragma once

#include "stvsr/tensor.hpp"

#include <array>
#include <span>

namespace stvsr {

// ---------------------------------------------------------------------------
// Elementwise arithmetic with trailing-dimension broadcasting.
// ---------------------------------------------------------------------------

/// Broadcast shape of two operands (numpy rules); throws ShapeError naming both.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b);

template <typename S> Tensor<S> add(const Tensor<S>& a, S b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, S b);

template <typename S> Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S> Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S> Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S> Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }
template <typename S> Tensor<S> operator+(const Tensor<S>& a, S b) { return add(a, b); }
template <typename S> Tensor<S> operator*(const Tensor<S>& a, S b) { return mul(a, b); }
template <typename S> Tensor<S> operator*(S a, const Tensor<S>& b) { return mul(b, a); }

template <typename S> Tensor<S> neg(const Tensor<S>& x);
template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> leaky_relu(const Tensor<S>& x, S slope);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);
template <typename S> Tensor<S> tanh(const Tensor<S>& x);
template <typename S> Tensor<S> exp(const Tensor<S>& x);
template <typename S> Tensor<S> softplus(const Tensor<S>& x);
template <typename S> Tensor<S> silu(const Tensor<S>& x);
template <typename S> Tensor<S> sqrt(const Tensor<S>& x);
template <typename S> Tensor<S> square(const Tensor<S>& x);

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulation).
// ---------------------------------------------------------------------------

template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);
/// Sum over one axis; the axis is kept with extent 1 when `keepdim`.
template <typename S> Tensor<S> sum(const Tensor<S>& x, int axis, bool keepdim = false);
template <typename S> Tensor<S> mean(const Tensor<S>& x, int axis, bool keepdim = false);

// ---------------------------------------------------------------------------
// Contractions.
// ---------------------------------------------------------------------------

/// [..,M,K] x [..,K,N] -> [..,M,N]; leading batch extents broadcast.
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

struct Conv2dOptions {
  std::array<Index, 2> stride{1, 1};
  std::array<Index, 2> padding{0, 0};
};
struct Conv3dOptions {
  std::array<Index, 3> stride{1, 1, 1};
  std::array<Index, 3> padding{0, 0, 0};
};

/// x [C_in,H,W], w [C_out,C_in,kh,kw], optional bias [C_out].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 Conv2dOptions opt = {});
/// x [C_in,T,H,W], w [C_out,C_in,kt,kh,kw], optional bias [C_out].
template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 Conv3dOptions opt = {});

// ---------------------------------------------------------------------------
// Layout: every op here is an exact index map with a scatter adjoint.
// ---------------------------------------------------------------------------

/// out.flat[i] = x.flat[source[i]]; the adjoint scatter-adds.
template <typename S>
Tensor<S> take(const Tensor<S>& x, Shape out_shape, std::vector<Index> source);

template <typename S> Tensor<S> reshape(const Tensor<S>& x, Shape shape);
template <typename S> Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes);
/// Swaps the last two axes.
template <typename S> Tensor<S> transpose(const Tensor<S>& x);
template <typename S> Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index length);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis);
/// Rows of x [L,...] selected by `rows` (repeats allowed).
template <typename S> Tensor<S> index_rows(const Tensor<S>& x, std::span<const Index> rows);

/// Reorders rows of x [L,...] by a permutation `order` of 0..L-1:
/// out[i] = x[order[i]]. Throws on out-of-range or repeated indices.
template <typename S> Tensor<S> gather_permute(const Tensor<S>& x, std::span<const Index> order);
/// Inverse of gather_permute: out[order[i]] = x[i].
template <typename S> Tensor<S> scatter_permute(const Tensor<S>& x, std::span<const Index> order);

/// [C*r*r,H,W] -> [C,rH,rW]
template <typename S> Tensor<S> pixel_shuffle(const Tensor<S>& x, Index r);
/// [C,rH,rW] -> [C*r*r,H,W]
template <typename S> Tensor<S> pixel_unshuffle(const Tensor<S>& x, Index r);

/// 2x2 average pooling over the last two axes of [C,H,W]; H,W even.
template <typename S> Tensor<S> avg_pool2(const Tensor<S>& x);
/// Bilinear 2x upsampling of [C,H,W] (half-pixel centres, edge clamped).
template <typename S> Tensor<S> upsample_bilinear2(const Tensor<S>& x);

/// Rotates channel pairs (2p, 2p+1) of x [L,C] by angles [L*(C/2)] (constant).
template <typename S>
Tensor<S> rotate_pairs(const Tensor<S>& x, std::span<const double> angles);

}  // namespace stvsr
