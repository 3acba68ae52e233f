#pragma once

#include "stvsr/gradcheck.hpp"
#include "stvsr/ops.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

namespace stvsr::testing {

inline Tensord randn_leaf(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  return Tensord::randn(std::move(shape), rng, stddev, true);
}

inline Shape random_shape(std::mt19937_64& rng, int min_rank, int max_rank, Index max_extent) {
  std::uniform_int_distribution<int> rank(min_rank, max_rank);
  std::uniform_int_distribution<Index> extent(1, max_extent);
  Shape s(static_cast<std::size_t>(rank(rng)));
  for (auto& d : s) d = extent(rng);
  return s;
}

inline ::testing::AssertionResult grad_ok(const gradcheck::Report& r) {
  if (r.ok) return ::testing::AssertionSuccess();
  return ::testing::AssertionFailure()
         << "gradient mismatch " << r.worst_error << " at " << r.worst_where;
}

/// Checks gradients of a unary-output function of `inputs` via a random projection.
template <typename F>
gradcheck::Report check_fn(F&& f, const ParamList<double>& inputs, std::uint64_t seed = 11,
                           gradcheck::Options opt = {}) {
  return gradcheck::check([&] { return gradcheck::random_projection(f(), seed); }, inputs, opt);
}

inline bool bit_equal(const Tensorf& a, const Tensorf& b) {
  return a.shape() == b.shape() && (a.values() == b.values()).all();
}

}  // namespace stvsr::testing
