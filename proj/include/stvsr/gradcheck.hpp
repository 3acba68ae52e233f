#pragma once

#include "stvsr/params.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace stvsr::gradcheck {

/// Central finite-difference comparison against tape gradients, in 64-bit.
///
/// Each probed coordinate (and each random direction) passes when
///   |fd - tape| <= abs_tol  or  |fd - tape| / max(|fd|, |tape|) <= rel_tol.
struct Options {
  double step = 1e-3;
  double rel_tol = 1e-3;
  double abs_tol = 1e-5;
  /// Coordinates probed per tensor; every coordinate when the tensor is smaller.
  Index coords_per_tensor = 6;
  /// Random unit-length joint directions over all inputs.
  Index directions = 2;
  std::uint64_t seed = 7;
};

struct Report {
  bool ok = true;
  Index checks = 0;
  double worst_error = 0.0;  // in the pass metric above
  std::string worst_where;
};

using LossFn = std::function<Tensord()>;

/// `loss` must rebuild the graph from the current values of `inputs` each call.
Report check(const LossFn& loss, const ParamList<double>& inputs, const Options& options = {});

/// sum(out * w) for a fixed random w; turns any output into a scalar probe.
Tensord random_projection(const Tensord& out, std::uint64_t seed);

}  // namespace stvsr::gradcheck
