#pragma once

#include "stvsr/tensor.hpp"

#include <vector>

namespace stvsr::detail {

// Per-output-axis strides of `operand` aligned to `out`; 0 on broadcast axes.
inline std::vector<Index> broadcast_strides(const Shape& operand, const Shape& out) {
  std::vector<Index> strides(out.size(), 0);
  Index stride = 1;
  const std::size_t offset = out.size() - operand.size();
  for (std::size_t i = operand.size(); i-- > 0;) {
    if (operand[i] != 1) strides[i + offset] = stride;
    stride *= operand[i];
  }
  return strides;
}

template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<Index>& sa,
                        const std::vector<Index>& sb, F&& f) {
  const Index total = numel(out);
  const int r = static_cast<int>(out.size());
  std::vector<Index> idx(out.size(), 0);
  Index ia = 0, ib = 0;
  for (Index o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace stvsr::detail
