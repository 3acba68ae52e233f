#pragma once

#include "stvsr/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace stvsr {

template <typename S>
struct NamedParam {
  std::string path;
  Tensor<S> tensor;
};

/// Flat parameter registry; paths are '/'-separated and unique per model.
template <typename S>
using ParamList = std::vector<NamedParam<S>>;

inline std::string join_path(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "/" + name;
}

template <typename S>
Tensor<S> uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
  return Tensor<S>::uniform(std::move(shape), rng, static_cast<S>(-bound), static_cast<S>(bound),
                            true);
}

template <typename S>
Tensor<S> zero_param(Shape shape) {
  return Tensor<S>::zeros(std::move(shape), true);
}

/// Fan-in scaled uniform init (bound 1/sqrt(fan_in)), the usual default for
/// convolution and linear weights.
template <typename S>
Tensor<S> fan_in_param(Shape shape, Index fan_in, std::mt19937_64& rng) {
  return uniform_param<S>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace stvsr
