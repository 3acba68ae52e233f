#include "stvsr/layers.hpp"

namespace stvsr {

template <typename S>
Conv2d<S> Conv2d<S>::init(Index in, Index out, Index kernel, std::mt19937_64& rng, InitMode mode) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d expects an odd kernel");
  Conv2d c;
  c.padding = kernel / 2;
  if (mode == InitMode::zero) {
    c.weight = zero_param<S>({out, in, kernel, kernel});
    c.bias = zero_param<S>({out});
  } else {
    const Index fan_in = in * kernel * kernel;
    c.weight = fan_in_param<S>({out, in, kernel, kernel}, fan_in, rng);
    c.bias = fan_in_param<S>({out}, fan_in, rng);
  }
  return c;
}

template <typename S>
Tensor<S> Conv2d<S>::operator()(const Tensor<S>& x) const {
  return conv2d(x, weight, bias, {{1, 1}, {padding, padding}});
}

template <typename S>
void Conv2d<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "weight"), weight});
  out.push_back({join_path(prefix, "bias"), bias});
}

template <typename S>
Conv3d<S> Conv3d<S>::init(Index in, Index out, std::array<Index, 3> kernel, Conv3dOptions options,
                          std::mt19937_64& rng) {
  const Index fan_in = in * kernel[0] * kernel[1] * kernel[2];
  return {fan_in_param<S>({out, in, kernel[0], kernel[1], kernel[2]}, fan_in, rng),
          fan_in_param<S>({out}, fan_in, rng), options};
}

template <typename S>
Tensor<S> Conv3d<S>::operator()(const Tensor<S>& x) const {
  return conv3d(x, weight, bias, options);
}

template <typename S>
void Conv3d<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "weight"), weight});
  out.push_back({join_path(prefix, "bias"), bias});
}

template <typename S>
Linear<S> Linear<S>::init(Index in, Index out, std::mt19937_64& rng, InitMode mode) {
  if (mode == InitMode::zero) return {zero_param<S>({in, out}), zero_param<S>({out})};
  return {fan_in_param<S>({in, out}, in, rng), fan_in_param<S>({out}, in, rng)};
}

template <typename S>
Tensor<S> Linear<S>::operator()(const Tensor<S>& x) const {
  return add(matmul(x, weight), bias);
}

template <typename S>
void Linear<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "weight"), weight});
  out.push_back({join_path(prefix, "bias"), bias});
}

template <typename S>
RmsNorm<S> RmsNorm<S>::init(Index channels) {
  return {Tensor<S>::full({channels}, S(1), true)};
}

template <typename S>
Tensor<S> RmsNorm<S>::operator()(const Tensor<S>& x) const {
  const Tensor<S> rms = sqrt(add(mean(square(x), -1, true), S(1e-6)));
  return mul(div(x, rms), gain);
}

template <typename S>
void RmsNorm<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "gain"), gain});
}

template <typename S>
ResidualBlock<S> ResidualBlock<S>::init(Index channels, std::mt19937_64& rng, InitMode last) {
  auto first = Conv2d<S>::init(channels, channels, 3, rng);
  return {first, Conv2d<S>::init(channels, channels, 3, rng, last)};
}

template <typename S>
Tensor<S> ResidualBlock<S>::operator()(const Tensor<S>& x) const {
  return add(x, second(relu(first(x))));
}

template <typename S>
void ResidualBlock<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  first.collect(out, join_path(prefix, "conv1"));
  second.collect(out, join_path(prefix, "conv2"));
}

template <typename S>
ChannelAttention<S> ChannelAttention<S>::init(Index channels, Index reduction,
                                              std::mt19937_64& rng) {
  const Index hidden = std::max<Index>(1, channels / reduction);
  auto squeeze = Linear<S>::init(channels, hidden, rng);
  return {squeeze, Linear<S>::init(hidden, channels, rng)};
}

template <typename S>
Tensor<S> ChannelAttention<S>::operator()(const Tensor<S>& x) const {
  const Index c = x.dim(0);
  const Tensor<S> pooled = reshape(mean(reshape(x, {c, -1}), 1), {1, c});
  const Tensor<S> gate = sigmoid(excite(relu(squeeze(pooled))));
  return mul(x, reshape(gate, {c, 1, 1}));
}

template <typename S>
void ChannelAttention<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  squeeze.collect(out, join_path(prefix, "squeeze"));
  excite.collect(out, join_path(prefix, "excite"));
}

template <typename S>
Tensor<S> to_tokens(const Tensor<S>& x) {
  if (x.ndim() != 3) throw ShapeError("to_tokens expects [C,H,W], got " + to_string(x.shape()));
  return transpose(reshape(x, {x.dim(0), -1}));
}

template <typename S>
Tensor<S> from_tokens(const Tensor<S>& tokens, Index h, Index w) {
  if (tokens.ndim() != 2 || tokens.dim(0) != h * w)
    throw ShapeError("from_tokens: " + to_string(tokens.shape()) + " is not " +
                     std::to_string(h * w) + " tokens");
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

template <typename S>
Tensor<S> stack_time(const std::vector<Tensor<S>>& frames) {
  std::vector<Tensor<S>> parts;
  parts.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.ndim() != 3) throw ShapeError("stack_time expects [C,H,W] frames");
    parts.push_back(reshape(f, {f.dim(0), 1, f.dim(1), f.dim(2)}));
  }
  return concat(parts, 1);
}

template <typename S>
Tensor<S> time_slice(const Tensor<S>& x, Index t) {
  return reshape(slice(x, 1, t, 1), {x.dim(0), x.dim(2), x.dim(3)});
}

#define STVSR_INSTANTIATE(S)                                                  \
  template struct Conv2d<S>;                                                  \
  template struct Conv3d<S>;                                                  \
  template struct Linear<S>;                                                  \
  template struct RmsNorm<S>;                                                 \
  template struct ResidualBlock<S>;                                           \
  template struct ChannelAttention<S>;                                        \
  template Tensor<S> to_tokens(const Tensor<S>&);                             \
  template Tensor<S> from_tokens(const Tensor<S>&, Index, Index);             \
  template Tensor<S> stack_time(const std::vector<Tensor<S>>&);               \
  template Tensor<S> time_slice(const Tensor<S>&, Index);

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
