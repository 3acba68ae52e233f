#include "stvsr/ops.hpp"

#include "broadcast.hpp"

#include <cmath>

namespace stvsr {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace {
using detail::broadcast_strides;
using detail::for_each_broadcast;

// Fwd(a,b) -> out; Da/Db(a,b,out) -> local partials.
template <typename S, typename Fwd, typename Da, typename Db>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, const char* name, Fwd fwd, Da da,
                 Db db) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const bool same = a.shape() == b.shape();
  auto sa = broadcast_strides(a.shape(), out_shape);
  auto sb = broadcast_strides(b.shape(), out_shape);
  Buffer<S> out(numel(out_shape));
  const auto& av = a.values();
  const auto& bv = b.values();
  if (same) {
    for (Index i = 0; i < out.size(); ++i) out(i) = fwd(av(i), bv(i));
  } else {
    for_each_broadcast(out_shape, sa, sb,
                       [&](Index o, Index ia, Index ib) { out(o) = fwd(av(ia), bv(ib)); });
  }
  auto bw = [out_shape, sa, sb, same, da, db](Node<S>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    Buffer<S> ga, gb;
    if (pa.requires_grad) ga = Buffer<S>::Zero(pa.value.size());
    if (pb.requires_grad) gb = Buffer<S>::Zero(pb.value.size());
    auto step = [&](Index o, Index ia, Index ib) {
      const S x = pa.value(ia), y = pb.value(ib), z = self.value(o);
      if (pa.requires_grad) ga(ia) += g(o) * da(x, y, z);
      if (pb.requires_grad) gb(ib) += g(o) * db(x, y, z);
    };
    if (same) {
      for (Index o = 0; o < g.size(); ++o) step(o, o, o);
    } else {
      for_each_broadcast(out_shape, sa, sb, step);
    }
    if (pa.requires_grad) pa.accumulate(ga);
    if (pb.requires_grad) pb.accumulate(gb);
  };
  return Tensor<S>::make_result(std::move(out_shape), std::move(out), {a, b}, bw, name);
}

// Fwd(x) -> y; D(x, y) -> dy/dx.
template <typename S, typename Fwd, typename D>
Tensor<S> unary(const Tensor<S>& x, const char* name, Fwd fwd, D d) {
  Buffer<S> out(x.numel());
  const auto& xv = x.values();
  for (Index i = 0; i < out.size(); ++i) out(i) = fwd(xv(i));
  auto bw = [d](Node<S>& self) {
    auto& p = *self.parents[0];
    Buffer<S> g(self.grad.size());
    for (Index i = 0; i < g.size(); ++i) g(i) = self.grad(i) * d(p.value(i), self.value(i));
    p.accumulate(g);
  };
  return Tensor<S>::make_result(x.shape(), std::move(out), {x}, bw, name);
}

template <typename S>
S stable_softplus(S x) {
  return x > S(20) ? x : static_cast<S>(std::log1p(std::exp(static_cast<double>(x))));
}

template <typename S>
S logistic(S x) {
  return static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(
      a, b, "add", [](S x, S y) { return x + y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(
      a, b, "sub", [](S x, S y) { return x - y; }, [](S, S, S) { return S(1); },
      [](S, S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(
      a, b, "mul", [](S x, S y) { return x * y; }, [](S, S y, S) { return y; },
      [](S x, S, S) { return x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(
      a, b, "div", [](S x, S y) { return x / y; }, [](S, S y, S) { return S(1) / y; },
      [](S, S y, S z) { return -z / y; });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, S b) {
  return unary(
      a, "add_scalar", [b](S x) { return x + b; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, S b) {
  return unary(
      a, "mul_scalar", [b](S x) { return x * b; }, [b](S, S) { return b; });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return mul(x, S(-1));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return unary(
      x, "relu", [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  return unary(
      x, "leaky_relu", [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](S v, S) { return v > S(0) ? S(1) : slope; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary(
      x, "sigmoid", [](S v) { return logistic(v); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return unary(
      x, "tanh", [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary(
      x, "exp", [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  return unary(
      x, "softplus", [](S v) { return stable_softplus(v); }, [](S v, S) { return logistic(v); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary(
      x, "silu", [](S v) { return v * logistic(v); },
      [](S v, S) {
        const S s = logistic(v);
        return s * (S(1) + v * (S(1) - s));
      });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  return unary(
      x, "sqrt", [](S v) { return std::sqrt(v); }, [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return unary(
      x, "square", [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

// --- reductions ------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  double acc = 0.0;
  for (Index i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.at(i));
  Buffer<S> out(1);
  out(0) = static_cast<S>(acc);
  auto bw = [](Node<S>& self) {
    auto& p = *self.parents[0];
    p.accumulate(Buffer<S>::Constant(p.value.size(), self.grad(0)));
  };
  return Tensor<S>::make_result({}, std::move(out), {x}, bw, "sum");
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return mul(sum(x), static_cast<S>(1.0 / static_cast<double>(x.numel())));
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x, int axis, bool keepdim) {
  const int r = x.ndim();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("sum axis out of range for shape " + to_string(x.shape()));
  Index outer = 1, inner = 1;
  const Index n = x.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[axis] = 1;
  else
    out_shape.erase(out_shape.begin() + axis);
  Buffer<S> out(outer * inner);
  const auto& xv = x.values();
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (Index k = 0; k < n; ++k) acc += static_cast<double>(xv((o * n + k) * inner + i));
      out(o * inner + i) = static_cast<S>(acc);
    }
  auto bw = [outer, inner, n](Node<S>& self) {
    auto& p = *self.parents[0];
    Buffer<S> g(p.value.size());
    for (Index o = 0; o < outer; ++o)
      for (Index k = 0; k < n; ++k)
        for (Index i = 0; i < inner; ++i) g((o * n + k) * inner + i) = self.grad(o * inner + i);
    p.accumulate(g);
  };
  return Tensor<S>::make_result(std::move(out_shape), std::move(out), {x}, bw, "sum_axis");
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x, int axis, bool keepdim) {
  const Index n = x.dim(axis);
  if (n == 0) throw ShapeError("mean over an empty axis");
  return mul(sum(x, axis, keepdim), static_cast<S>(1.0 / static_cast<double>(n)));
}

#define STVSR_INSTANTIATE(S)                                                       \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> div(const Tensor<S>&, const Tensor<S>&);                      \
  template Tensor<S> add(const Tensor<S>&, S);                                     \
  template Tensor<S> mul(const Tensor<S>&, S);                                     \
  template Tensor<S> neg(const Tensor<S>&);                                        \
  template Tensor<S> relu(const Tensor<S>&);                                       \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                              \
  template Tensor<S> sigmoid(const Tensor<S>&);                                    \
  template Tensor<S> tanh(const Tensor<S>&);                                       \
  template Tensor<S> exp(const Tensor<S>&);                                        \
  template Tensor<S> softplus(const Tensor<S>&);                                   \
  template Tensor<S> silu(const Tensor<S>&);                                       \
  template Tensor<S> sqrt(const Tensor<S>&);                                       \
  template Tensor<S> square(const Tensor<S>&);                                     \
  template Tensor<S> sum(const Tensor<S>&);                                        \
  template Tensor<S> mean(const Tensor<S>&);                                       \
  template Tensor<S> sum(const Tensor<S>&, int, bool);                             \
  template Tensor<S> mean(const Tensor<S>&, int, bool);

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
