#include "stvsr/ops.hpp"

#include "broadcast.hpp"

#include <Eigen/Dense>

namespace stvsr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ConstRowMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
RowMat as_double(const S* data, Index rows, Index cols) {
  return ConstRowMap<S>(data, rows, cols).template cast<double>();
}

template <typename S>
void add_into(Buffer<S>& dst, Index offset, const RowMat& m) {
  const double* src = m.data();
  for (Index i = 0; i < m.size(); ++i) dst(offset + i) += static_cast<S>(src[i]);
}

struct ConvGeometry {
  Index ci, t, h, w;        // input
  Index co, kt, kh, kw;     // kernel
  Index st, sh, sw;         // stride
  Index pt, ph, pw;         // padding
  Index ot, oh, ow;         // output

  Index k() const { return ci * kt * kh * kw; }
  Index p() const { return ot * oh * ow; }
};

template <typename S>
RowMat im2col(const Buffer<S>& x, const ConvGeometry& g) {
  RowMat cols = RowMat::Zero(g.k(), g.p());
  for (Index c = 0; c < g.ci; ++c)
    for (Index dt = 0; dt < g.kt; ++dt)
      for (Index dy = 0; dy < g.kh; ++dy)
        for (Index dx = 0; dx < g.kw; ++dx) {
          const Index row = ((c * g.kt + dt) * g.kh + dy) * g.kw + dx;
          double* out = cols.row(row).data();
          for (Index ot = 0; ot < g.ot; ++ot) {
            const Index it = ot * g.st - g.pt + dt;
            if (it < 0 || it >= g.t) continue;
            for (Index oy = 0; oy < g.oh; ++oy) {
              const Index iy = oy * g.sh - g.ph + dy;
              if (iy < 0 || iy >= g.h) continue;
              const Index base = ((c * g.t + it) * g.h + iy) * g.w;
              const Index obase = (ot * g.oh + oy) * g.ow;
              for (Index ox = 0; ox < g.ow; ++ox) {
                const Index ix = ox * g.sw - g.pw + dx;
                if (ix >= 0 && ix < g.w) out[obase + ox] = static_cast<double>(x(base + ix));
              }
            }
          }
        }
  return cols;
}

template <typename S>
void col2im(const RowMat& cols, const ConvGeometry& g, Buffer<S>& gx) {
  for (Index c = 0; c < g.ci; ++c)
    for (Index dt = 0; dt < g.kt; ++dt)
      for (Index dy = 0; dy < g.kh; ++dy)
        for (Index dx = 0; dx < g.kw; ++dx) {
          const Index row = ((c * g.kt + dt) * g.kh + dy) * g.kw + dx;
          const double* in = cols.row(row).data();
          for (Index ot = 0; ot < g.ot; ++ot) {
            const Index it = ot * g.st - g.pt + dt;
            if (it < 0 || it >= g.t) continue;
            for (Index oy = 0; oy < g.oh; ++oy) {
              const Index iy = oy * g.sh - g.ph + dy;
              if (iy < 0 || iy >= g.h) continue;
              const Index base = ((c * g.t + it) * g.h + iy) * g.w;
              const Index obase = (ot * g.oh + oy) * g.ow;
              for (Index ox = 0; ox < g.ow; ++ox) {
                const Index ix = ox * g.sw - g.pw + dx;
                if (ix >= 0 && ix < g.w) gx(base + ix) += static_cast<S>(in[obase + ox]);
              }
            }
          }
        }
}

Index out_extent(Index in, Index k, Index stride, Index pad, const char* axis) {
  if (stride < 1) throw ShapeError(std::string("conv stride must be positive on axis ") + axis);
  const Index span = in + 2 * pad - k;
  if (span < 0)
    throw ShapeError(std::string("conv output extent is non-positive on axis ") + axis +
                     " (input " + std::to_string(in) + ", kernel " + std::to_string(k) +
                     ", padding " + std::to_string(pad) + ")");
  return span / stride + 1;
}

// Shared core for conv2d/conv3d, operating on x [Ci,T,H,W] and w [Co,Ci,kt,kh,kw].
template <typename S>
Tensor<S> conv_core(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                    ConvGeometry g, Shape out_shape, const char* name) {
  const RowMat cols = im2col(x.values(), g);
  const RowMat wd = as_double(w.values().data(), g.co, g.k());
  RowMat out = wd * cols;
  if (bias.defined()) {
    if (bias.numel() != g.co)
      throw ShapeError(std::string(name) + ": bias shape " + to_string(bias.shape()) +
                       " does not match " + std::to_string(g.co) + " output channels");
    for (Index o = 0; o < g.co; ++o) out.row(o).array() += static_cast<double>(bias.at(o));
  }
  Buffer<S> values = Eigen::Map<const Eigen::ArrayXd>(out.data(), out.size()).cast<S>();

  const bool has_bias = bias.defined();
  auto bw = [g, has_bias](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const RowMat grad = as_double(self.grad.data(), g.co, g.p());
    if (pw.requires_grad) {
      const RowMat cols = im2col(px.value, g);
      Buffer<S> gw = Buffer<S>::Zero(pw.value.size());
      add_into(gw, 0, RowMat(grad * cols.transpose()));
      pw.accumulate(gw);
    }
    if (px.requires_grad) {
      const RowMat wd = as_double(pw.value.data(), g.co, g.k());
      const RowMat gcols = wd.transpose() * grad;
      Buffer<S> gx = Buffer<S>::Zero(px.value.size());
      col2im(gcols, g, gx);
      px.accumulate(gx);
    }
    if (has_bias) {
      auto& pb = *self.parents[2];
      if (pb.requires_grad) pb.accumulate(grad.rowwise().sum().array().cast<S>());
    }
  };
  std::vector<Tensor<S>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  return Tensor<S>::make_result(std::move(out_shape), std::move(values), std::move(parents), bw,
                                name);
}

}  // namespace

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() < 2 || b.ndim() < 2)
    throw ShapeError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const Index m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2)
    throw ShapeError("matmul inner extents differ: " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape(batch_a, batch_b);
  const auto sa = detail::broadcast_strides(batch_a, batch);
  const auto sb = detail::broadcast_strides(batch_b, batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  Buffer<S> out(numel(out_shape));
  detail::for_each_broadcast(batch, sa, sb, [&](Index o, Index ia, Index ib) {
    const RowMat prod = as_double(a.values().data() + ia * m * k, m, k) *
                        as_double(b.values().data() + ib * k * n, k, n);
    for (Index i = 0; i < prod.size(); ++i) out(o * m * n + i) = static_cast<S>(prod.data()[i]);
  });

  auto bw = [batch, sa, sb, m, k, n](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    Buffer<S> ga, gb;
    if (pa.requires_grad) ga = Buffer<S>::Zero(pa.value.size());
    if (pb.requires_grad) gb = Buffer<S>::Zero(pb.value.size());
    detail::for_each_broadcast(batch, sa, sb, [&](Index o, Index ia, Index ib) {
      const RowMat g = as_double(self.grad.data() + o * m * n, m, n);
      if (pa.requires_grad)
        add_into(ga, ia * m * k, RowMat(g * as_double(pb.value.data() + ib * k * n, k, n).transpose()));
      if (pb.requires_grad)
        add_into(gb, ib * k * n, RowMat(as_double(pa.value.data() + ia * m * k, m, k).transpose() * g));
    });
    if (pa.requires_grad) pa.accumulate(ga);
    if (pb.requires_grad) pb.accumulate(gb);
  };
  return Tensor<S>::make_result(std::move(out_shape), std::move(out), {a, b}, bw, "matmul");
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, Conv2dOptions opt) {
  if (x.ndim() != 3 || w.ndim() != 4)
    throw ShapeError("conv2d expects x [C,H,W] and w [Co,Ci,kh,kw], got " + to_string(x.shape()) +
                     " and " + to_string(w.shape()));
  if (w.dim(1) != x.dim(0))
    throw ShapeError("conv2d channel mismatch: x " + to_string(x.shape()) + ", w " +
                     to_string(w.shape()));
  ConvGeometry g{};
  g.ci = x.dim(0), g.t = 1, g.h = x.dim(1), g.w = x.dim(2);
  g.co = w.dim(0), g.kt = 1, g.kh = w.dim(2), g.kw = w.dim(3);
  g.st = 1, g.sh = opt.stride[0], g.sw = opt.stride[1];
  g.pt = 0, g.ph = opt.padding[0], g.pw = opt.padding[1];
  g.ot = 1;
  g.oh = out_extent(g.h, g.kh, g.sh, g.ph, "H");
  g.ow = out_extent(g.w, g.kw, g.sw, g.pw, "W");
  return conv_core(x, w, bias, g, {g.co, g.oh, g.ow}, "conv2d");
}

template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, Conv3dOptions opt) {
  if (x.ndim() != 4 || w.ndim() != 5)
    throw ShapeError("conv3d expects x [C,T,H,W] and w [Co,Ci,kt,kh,kw], got " +
                     to_string(x.shape()) + " and " + to_string(w.shape()));
  if (w.dim(1) != x.dim(0))
    throw ShapeError("conv3d channel mismatch: x " + to_string(x.shape()) + ", w " +
                     to_string(w.shape()));
  ConvGeometry g{};
  g.ci = x.dim(0), g.t = x.dim(1), g.h = x.dim(2), g.w = x.dim(3);
  g.co = w.dim(0), g.kt = w.dim(2), g.kh = w.dim(3), g.kw = w.dim(4);
  g.st = opt.stride[0], g.sh = opt.stride[1], g.sw = opt.stride[2];
  g.pt = opt.padding[0], g.ph = opt.padding[1], g.pw = opt.padding[2];
  g.ot = out_extent(g.t, g.kt, g.st, g.pt, "T");
  g.oh = out_extent(g.h, g.kh, g.sh, g.ph, "H");
  g.ow = out_extent(g.w, g.kw, g.sw, g.pw, "W");
  return conv_core(x, w, bias, g, {g.co, g.ot, g.oh, g.ow}, "conv3d");
}

#define STVSR_INSTANTIATE(S)                                                                 \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Conv2dOptions); \
  template Tensor<S> conv3d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Conv3dOptions);

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
