#include "stvsr/ops.hpp"

#include <cmath>
#include <numeric>

namespace stvsr {

template <typename S>
Tensor<S> take(const Tensor<S>& x, Shape out_shape, std::vector<Index> source) {
  if (numel(out_shape) != static_cast<Index>(source.size()))
    throw ShapeError("take: " + std::to_string(source.size()) + " indices for shape " +
                     to_string(out_shape));
  Buffer<S> out(static_cast<Index>(source.size()));
  const auto& xv = x.values();
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] < 0 || source[i] >= x.numel())
      throw std::out_of_range("take: index " + std::to_string(source[i]) + " outside tensor of " +
                              std::to_string(x.numel()) + " values");
    out(static_cast<Index>(i)) = xv(source[i]);
  }
  auto bw = [source = std::move(source)](Node<S>& self) {
    auto& p = *self.parents[0];
    Buffer<S> g = Buffer<S>::Zero(p.value.size());
    for (std::size_t i = 0; i < source.size(); ++i) g(source[i]) += self.grad(static_cast<Index>(i));
    p.accumulate(g);
  };
  return Tensor<S>::make_result(std::move(out_shape), std::move(out), {x}, bw, "take");
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  auto bw = [](Node<S>& self) { self.parents[0]->accumulate(self.grad); };
  return Tensor<S>::make_result(std::move(shape), x.values(), {x}, bw, "reshape");
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes) {
  const int r = x.ndim();
  if (static_cast<int>(axes.size()) != r)
    throw ShapeError("permute: axis list does not match rank of " + to_string(x.shape()));
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<Index> in_strides(static_cast<std::size_t>(r));
  Index stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    in_strides[static_cast<std::size_t>(i)] = stride;
    stride *= x.shape()[static_cast<std::size_t>(i)];
  }
  std::vector<Index> src_strides(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int a = axes[static_cast<std::size_t>(i)];
    if (a < 0 || a >= r || used[static_cast<std::size_t>(a)])
      throw ShapeError("permute: invalid axis order");
    used[static_cast<std::size_t>(a)] = true;
    out_shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(a)];
    src_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(a)];
  }
  std::vector<Index> source(static_cast<std::size_t>(x.numel()));
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  Index src = 0;
  for (std::size_t o = 0; o < source.size(); ++o) {
    source[o] = src;
    for (int d = r - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      ++idx[ud];
      src += src_strides[ud];
      if (idx[ud] < out_shape[ud]) break;
      src -= src_strides[ud] * out_shape[ud];
      idx[ud] = 0;
    }
  }
  return take(x, std::move(out_shape), std::move(source));
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  const int r = x.ndim();
  if (r < 2) throw ShapeError("transpose needs rank >= 2, got " + to_string(x.shape()));
  std::vector<int> axes(static_cast<std::size_t>(r));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[static_cast<std::size_t>(r - 1)], axes[static_cast<std::size_t>(r - 2)]);
  return permute(x, axes);
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index length) {
  const int r = x.ndim();
  if (axis < 0) axis += r;
  const Index extent = x.dim(axis);
  if (start < 0 || length < 0 || start + length > extent)
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis " + std::to_string(axis) + " of " + to_string(x.shape()));
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  std::vector<Index> source;
  source.reserve(static_cast<std::size_t>(outer * length * inner));
  for (Index o = 0; o < outer; ++o)
    for (Index k = 0; k < length; ++k)
      for (Index i = 0; i < inner; ++i) source.push_back((o * extent + start + k) * inner + i);
  return take(x, std::move(out_shape), std::move(source));
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  const int r = parts.front().ndim();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat axis out of range");
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (static_cast<int>(s.size()) != r)
      throw ShapeError("concat rank mismatch: " + to_string(s) + " vs " +
                       to_string(parts.front().shape()));
    const Index along = s[static_cast<std::size_t>(axis)];
    s[static_cast<std::size_t>(axis)] = 0;
    Shape ref = parts.front().shape();
    ref[static_cast<std::size_t>(axis)] = 0;
    if (s != ref)
      throw ShapeError("concat shape mismatch: " + to_string(p.shape()) + " vs " +
                       to_string(parts.front().shape()));
    out_shape[static_cast<std::size_t>(axis)] += along;
  }
  Index outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<std::size_t>(i)];
  std::vector<Index> chunk;  // per part: extent along axis * inner
  for (const auto& p : parts) chunk.push_back(p.dim(axis) * inner);
  const Index row = out_shape[static_cast<std::size_t>(axis)] * inner;

  Buffer<S> out(numel(out_shape));
  for (Index o = 0; o < outer; ++o) {
    Index offset = o * row;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      out.segment(offset, chunk[j]) = parts[j].values().segment(o * chunk[j], chunk[j]);
      offset += chunk[j];
    }
  }
  auto bw = [outer, row, chunk](Node<S>& self) {
    for (std::size_t j = 0; j < self.parents.size(); ++j) {
      auto& p = *self.parents[j];
      if (!p.requires_grad) continue;
      Index before = 0;
      for (std::size_t q = 0; q < j; ++q) before += chunk[q];
      Buffer<S> g(p.value.size());
      for (Index o = 0; o < outer; ++o)
        g.segment(o * chunk[j], chunk[j]) = self.grad.segment(o * row + before, chunk[j]);
      p.accumulate(g);
    }
  };
  return Tensor<S>::make_result(std::move(out_shape), std::move(out), parts, bw, "concat");
}

template <typename S>
Tensor<S> index_rows(const Tensor<S>& x, std::span<const Index> rows) {
  if (x.ndim() < 1) throw ShapeError("index_rows on a scalar");
  const Index n = x.dim(0);
  const Index width = n == 0 ? 0 : x.numel() / n;
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<Index>(rows.size());
  std::vector<Index> source;
  source.reserve(rows.size() * static_cast<std::size_t>(width));
  for (Index r : rows) {
    if (r < 0 || r >= n)
      throw std::out_of_range("index_rows: row " + std::to_string(r) + " outside [0, " +
                              std::to_string(n) + ")");
    for (Index c = 0; c < width; ++c) source.push_back(r * width + c);
  }
  return take(x, std::move(out_shape), std::move(source));
}

namespace {

void check_permutation(std::span<const Index> order, Index rows) {
  if (static_cast<Index>(order.size()) != rows)
    throw ShapeError("permutation of length " + std::to_string(order.size()) + " applied to " +
                     std::to_string(rows) + " rows");
  std::vector<bool> seen(order.size(), false);
  for (Index i : order) {
    if (i < 0 || i >= rows)
      throw std::out_of_range("permutation index " + std::to_string(i) + " outside [0, " +
                              std::to_string(rows) + ")");
    if (seen[static_cast<std::size_t>(i)])
      throw std::invalid_argument("permutation repeats index " + std::to_string(i));
    seen[static_cast<std::size_t>(i)] = true;
  }
}

}  // namespace

template <typename S>
Tensor<S> gather_permute(const Tensor<S>& x, std::span<const Index> order) {
  check_permutation(order, x.ndim() ? x.dim(0) : 0);
  return index_rows(x, order);
}

template <typename S>
Tensor<S> scatter_permute(const Tensor<S>& x, std::span<const Index> order) {
  check_permutation(order, x.ndim() ? x.dim(0) : 0);
  std::vector<Index> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[static_cast<std::size_t>(order[i])] = static_cast<Index>(i);
  return index_rows(x, std::span<const Index>(inverse));
}

template <typename S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, Index r) {
  if (x.ndim() != 3 || r < 1) throw ShapeError("pixel_shuffle expects [C*r*r,H,W] and r >= 1");
  const Index cr = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (cr % (r * r) != 0)
    throw ShapeError("pixel_shuffle: " + std::to_string(cr) + " channels not divisible by r^2=" +
                     std::to_string(r * r));
  const Index c = cr / (r * r);
  std::vector<Index> source(static_cast<std::size_t>(x.numel()));
  std::size_t o = 0;
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h * r; ++y)
      for (Index xx = 0; xx < w * r; ++xx) {
        const Index in_c = ch * r * r + (y % r) * r + (xx % r);
        source[o++] = (in_c * h + y / r) * w + xx / r;
      }
  return take(x, {c, h * r, w * r}, std::move(source));
}

template <typename S>
Tensor<S> pixel_unshuffle(const Tensor<S>& x, Index r) {
  if (x.ndim() != 3 || r < 1) throw ShapeError("pixel_unshuffle expects [C,rH,rW] and r >= 1");
  const Index c = x.dim(0), hr = x.dim(1), wr = x.dim(2);
  if (hr % r != 0 || wr % r != 0)
    throw ShapeError("pixel_unshuffle: spatial extents of " + to_string(x.shape()) +
                     " not divisible by r=" + std::to_string(r));
  const Index h = hr / r, w = wr / r;
  std::vector<Index> source(static_cast<std::size_t>(x.numel()));
  std::size_t o = 0;
  for (Index oc = 0; oc < c * r * r; ++oc) {
    const Index ch = oc / (r * r), dy = (oc / r) % r, dx = oc % r;
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx) source[o++] = (ch * hr + y * r + dy) * wr + xx * r + dx;
  }
  return take(x, {c * r * r, h, w}, std::move(source));
}

template <typename S>
Tensor<S> avg_pool2(const Tensor<S>& x) {
  if (x.ndim() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0)
    throw ShapeError("avg_pool2 expects [C,H,W] with even H,W, got " + to_string(x.shape()));
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h / 2, ow = w / 2;
  Buffer<S> out(c * oh * ow);
  const auto& xv = x.values();
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) {
        const Index b = (ch * h + 2 * y) * w + 2 * xx;
        const double s = static_cast<double>(xv(b)) + xv(b + 1) + xv(b + w) + xv(b + w + 1);
        out((ch * oh + y) * ow + xx) = static_cast<S>(0.25 * s);
      }
  auto bw = [c, h, w, oh, ow](Node<S>& self) {
    auto& p = *self.parents[0];
    Buffer<S> g(p.value.size());
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx)
          g((ch * h + y) * w + xx) = S(0.25) * self.grad((ch * oh + y / 2) * ow + xx / 2);
    p.accumulate(g);
  };
  return Tensor<S>::make_result({c, oh, ow}, std::move(out), {x}, bw, "avg_pool2");
}

namespace {

struct Tap {
  Index lo, hi;
  double w_lo, w_hi;
};

// Half-pixel-centred 2x bilinear taps along one axis.
std::vector<Tap> upsample_taps(Index n) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n));
  for (Index o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(std::floor(src));
    if (lo > n - 1) lo = n - 1;
    const Index hi = std::min(lo + 1, n - 1);
    const double frac = src - static_cast<double>(lo);
    taps[static_cast<std::size_t>(o)] = {lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename S>
Tensor<S> upsample_bilinear2(const Tensor<S>& x) {
  if (x.ndim() != 3) throw ShapeError("upsample_bilinear2 expects [C,H,W], got " + to_string(x.shape()));
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = upsample_taps(h), tx = upsample_taps(w);
  const Index oh = 2 * h, ow = 2 * w;
  Buffer<S> out(c * oh * ow);
  const auto& xv = x.values();
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < oh; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (Index xx = 0; xx < ow; ++xx) {
        const Tap& b = tx[static_cast<std::size_t>(xx)];
        auto at = [&](Index yy, Index xc) { return static_cast<double>(xv((ch * h + yy) * w + xc)); };
        const double v = a.w_lo * (b.w_lo * at(a.lo, b.lo) + b.w_hi * at(a.lo, b.hi)) +
                         a.w_hi * (b.w_lo * at(a.hi, b.lo) + b.w_hi * at(a.hi, b.hi));
        out((ch * oh + y) * ow + xx) = static_cast<S>(v);
      }
    }
  auto bw = [c, h, w, oh, ow, ty, tx](Node<S>& self) {
    auto& p = *self.parents[0];
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(p.value.size());
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < oh; ++y) {
        const Tap& a = ty[static_cast<std::size_t>(y)];
        for (Index xx = 0; xx < ow; ++xx) {
          const Tap& b = tx[static_cast<std::size_t>(xx)];
          const double up = static_cast<double>(self.grad((ch * oh + y) * ow + xx));
          g((ch * h + a.lo) * w + b.lo) += up * a.w_lo * b.w_lo;
          g((ch * h + a.lo) * w + b.hi) += up * a.w_lo * b.w_hi;
          g((ch * h + a.hi) * w + b.lo) += up * a.w_hi * b.w_lo;
          g((ch * h + a.hi) * w + b.hi) += up * a.w_hi * b.w_hi;
        }
      }
    p.accumulate(g.cast<S>());
  };
  return Tensor<S>::make_result({c, oh, ow}, std::move(out), {x}, bw, "upsample_bilinear2");
}

template <typename S>
Tensor<S> rotate_pairs(const Tensor<S>& x, std::span<const double> angles) {
  if (x.ndim() != 2 || x.dim(1) % 2 != 0)
    throw ShapeError("rotate_pairs expects [L,C] with even C, got " + to_string(x.shape()));
  const Index l = x.dim(0), pairs = x.dim(1) / 2;
  if (static_cast<Index>(angles.size()) != l * pairs)
    throw ShapeError("rotate_pairs: " + std::to_string(angles.size()) + " angles for " +
                     to_string(x.shape()));
  std::vector<double> cs(angles.size()), sn(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    cs[i] = std::cos(angles[i]);
    sn[i] = std::sin(angles[i]);
  }
  Buffer<S> out(x.numel());
  const auto& xv = x.values();
  for (Index i = 0; i < l * pairs; ++i) {
    const double a = xv(2 * i), b = xv(2 * i + 1);
    const auto k = static_cast<std::size_t>(i);
    out(2 * i) = static_cast<S>(a * cs[k] - b * sn[k]);
    out(2 * i + 1) = static_cast<S>(a * sn[k] + b * cs[k]);
  }
  auto bw = [cs = std::move(cs), sn = std::move(sn)](Node<S>& self) {
    auto& p = *self.parents[0];
    Buffer<S> g(p.value.size());
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const auto i = static_cast<Index>(k);
      const double ga = self.grad(2 * i), gb = self.grad(2 * i + 1);
      g(2 * i) = static_cast<S>(ga * cs[k] + gb * sn[k]);
      g(2 * i + 1) = static_cast<S>(-ga * sn[k] + gb * cs[k]);
    }
    p.accumulate(g);
  };
  return Tensor<S>::make_result(x.shape(), std::move(out), {x}, bw, "rotate_pairs");
}

#define STVSR_INSTANTIATE(S)                                                     \
  template Tensor<S> take(const Tensor<S>&, Shape, std::vector<Index>);          \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                           \
  template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);         \
  template Tensor<S> transpose(const Tensor<S>&);                                \
  template Tensor<S> slice(const Tensor<S>&, int, Index, Index);                 \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                 \
  template Tensor<S> index_rows(const Tensor<S>&, std::span<const Index>);       \
  template Tensor<S> gather_permute(const Tensor<S>&, std::span<const Index>);   \
  template Tensor<S> scatter_permute(const Tensor<S>&, std::span<const Index>);  \
  template Tensor<S> pixel_shuffle(const Tensor<S>&, Index);                     \
  template Tensor<S> pixel_unshuffle(const Tensor<S>&, Index);                   \
  template Tensor<S> avg_pool2(const Tensor<S>&);                                \
  template Tensor<S> upsample_bilinear2(const Tensor<S>&);                       \
  template Tensor<S> rotate_pairs(const Tensor<S>&, std::span<const double>);

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
