#include "stvsr/sequencing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stvsr {

std::string to_string(ScanDirection d) {
  switch (d) {
    case ScanDirection::row_forward: return "row+";
    case ScanDirection::row_backward: return "row-";
    case ScanDirection::col_forward: return "col+";
    case ScanDirection::col_backward: return "col-";
  }
  return "?";
}

ScanOrder ScanOrder::from_forward(std::vector<Index> forward, ScanDirection direction) {
  const auto n = forward.size();
  std::vector<Index> inverse(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Index f = forward[i];
    if (f < 0 || f >= static_cast<Index>(n) || inverse[static_cast<std::size_t>(f)] != -1)
      throw std::invalid_argument("scan order is not a permutation");
    inverse[static_cast<std::size_t>(f)] = static_cast<Index>(i);
  }
  return {std::move(forward), std::move(inverse), direction};
}

namespace {

void check_grid(Index h, Index w) {
  if (h < 1 || w < 1)
    throw std::invalid_argument("grid needs h, w >= 1, got " + std::to_string(h) + "x" +
                                std::to_string(w));
}

// Raster indices of an h*w grid visited in direction d.
std::vector<Index> visit(Index h, Index w, ScanDirection d) {
  std::vector<Index> cells;
  cells.reserve(static_cast<std::size_t>(h * w));
  const bool by_row = d == ScanDirection::row_forward || d == ScanDirection::row_backward;
  if (by_row) {
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) cells.push_back(y * w + x);
  } else {
    for (Index x = 0; x < w; ++x)
      for (Index y = 0; y < h; ++y) cells.push_back(y * w + x);
  }
  if (d == ScanDirection::row_backward || d == ScanDirection::col_backward)
    std::reverse(cells.begin(), cells.end());
  return cells;
}

}  // namespace

std::array<ScanOrder, 4> masm_orders(Index h, Index w) {
  check_grid(h, w);
  const Index hw = h * w;
  std::array<ScanOrder, 4> orders;
  const std::array<ScanDirection, 4> dirs{ScanDirection::row_forward, ScanDirection::row_backward,
                                          ScanDirection::col_forward, ScanDirection::col_backward};
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<Index> forward;
    forward.reserve(static_cast<std::size_t>(2 * hw));
    for (Index cell : visit(h, w, dirs[k])) {
      forward.push_back(cell);
      forward.push_back(hw + cell);
    }
    orders[k] = ScanOrder::from_forward(std::move(forward), dirs[k]);
  }
  return orders;
}

ScanOrder vim_order(Index h, Index w) {
  check_grid(h, w);
  return ScanOrder::from_forward(visit(h, w, ScanDirection::row_forward),
                                 ScanDirection::row_forward);
}

RegisterLayout RegisterLayout::uniform(Index content_len, Index registers) {
  return per_frame(1, content_len, registers);
}

RegisterLayout RegisterLayout::per_frame(Index frames, Index frame_len, Index registers) {
  if (frames < 1 || frame_len < 1 || registers < 0)
    throw std::invalid_argument("register layout needs frames, length >= 1 and registers >= 0");
  RegisterLayout out;
  out.content_len = frames * frame_len;
  out.register_count = frames * registers;
  out.distinct_registers = registers;
  const Index stride = registers ? (frame_len + registers - 1) / registers : 0;
  for (Index f = 0; f < frames; ++f) {
    Index placed = 0;
    for (Index j = 1; j <= registers; ++j) {
      const Index before = std::min(j * stride, frame_len);
      for (; placed < before; ++placed) out.source.push_back(f * frame_len + placed);
      out.positions.push_back(static_cast<Index>(out.source.size()));
      out.source.push_back(-j);
    }
    for (; placed < frame_len; ++placed) out.source.push_back(f * frame_len + placed);
  }
  return out;
}

template <typename S>
Tensor<S> insert_registers(const Tensor<S>& x, const RegisterLayout& layout, const Tensor<S>& r) {
  if (x.ndim() != 2 || x.dim(0) != layout.content_len)
    throw ShapeError("insert_registers: layout holds " + std::to_string(layout.content_len) +
                     " content tokens, input is " + to_string(x.shape()));
  if (layout.register_count == 0) return x;
  require_shape(r.shape(), {layout.distinct_registers, x.dim(1)}, "register table");
  std::vector<Index> rows(layout.source.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index s = layout.source[i];
    rows[i] = s >= 0 ? s : layout.content_len + (-s - 1);
  }
  return index_rows(concat<S>({x, r}, 0), std::span<const Index>(rows));
}

template <typename S>
Tensor<S> remove_registers(const Tensor<S>& x, const RegisterLayout& layout) {
  if (x.ndim() != 2 || x.dim(0) != layout.total_len())
    throw ShapeError("remove_registers: layout expects " + std::to_string(layout.total_len()) +
                     " tokens, input is " + to_string(x.shape()));
  if (layout.register_count == 0) return x;
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(layout.content_len));
  for (std::size_t i = 0; i < layout.source.size(); ++i)
    if (layout.source[i] >= 0) rows.push_back(static_cast<Index>(i));
  return index_rows(x, std::span<const Index>(rows));
}

std::vector<TokenSite> frame_sites(Index frames, Index h, Index w, const RegisterLayout& layout) {
  const Index hw = h * w;
  if (layout.content_len != frames * hw)
    throw ShapeError("frame_sites: layout has " + std::to_string(layout.content_len) +
                     " content tokens, grid has " + std::to_string(frames * hw));
  std::vector<TokenSite> sites;
  sites.reserve(layout.source.size());
  Index frame = 0;
  for (Index s : layout.source) {
    if (s >= 0) {
      frame = s / hw;
      sites.push_back({false, frame, (s % hw) / w, s % w});
    } else {
      sites.push_back({true, frame, -1, -1});
    }
  }
  return sites;
}

std::vector<TokenSite> frame_sites(Index frames, Index h, Index w) {
  return frame_sites(frames, h, w, RegisterLayout::per_frame(frames, h * w, 0));
}

SpatialPositionEncoding::SpatialPositionEncoding(Index h, Index w, Index d, FrequencyRule rule)
    : h_(h), w_(w), d_(d) {
  check_grid(h, w);
  if (d <= 0 || d % 4 != 0)
    throw std::invalid_argument("spatial encoding needs channels divisible by 4, got " +
                                std::to_string(d));
  for (Index i = 1; i <= d / 4; ++i) {
    const double v = std::numbers::pi * static_cast<double>(i) / 2.0;
    omega_.push_back(rule == FrequencyRule::floored ? std::floor(v) : v);
  }
}

double SpatialPositionEncoding::angle(Index u, Index v, Index pair) const {
  if (u < 0 || u >= h_ || v < 0 || v >= w_)
    throw std::out_of_range("position (" + std::to_string(u) + "," + std::to_string(v) +
                            ") outside " + std::to_string(h_) + "x" + std::to_string(w_));
  const Index q = d_ / 4;
  if (pair < 0 || pair >= 2 * q) throw std::out_of_range("channel pair out of range");
  const auto k = static_cast<std::size_t>(pair < q ? pair : pair - q);
  return static_cast<double>(pair < q ? u : v) * omega_[k];
}

SpatialPositionEncoding build_spe(Index h, Index w, Index d, FrequencyRule rule) {
  return SpatialPositionEncoding(h, w, d, rule);
}

template <typename S>
Tensor<S> apply_spe(const Tensor<S>& x, const std::vector<TokenSite>& sites,
                    const SpatialPositionEncoding& spe) {
  if (x.ndim() != 2 || x.dim(1) != spe.channels() ||
      x.dim(0) != static_cast<Index>(sites.size()))
    throw ShapeError("apply_spe: " + std::to_string(sites.size()) + " sites with " +
                     std::to_string(spe.channels()) + " channels, input is " +
                     to_string(x.shape()));
  const Index pairs = spe.channels() / 2;
  std::vector<double> angles(sites.size() * static_cast<std::size_t>(pairs), 0.0);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const TokenSite& s = sites[i];
    if (s.is_register) continue;
    if (s.u < 0 || s.v < 0)
      throw std::invalid_argument("apply_spe: content token " + std::to_string(i) +
                                  " has no spatial coordinate");
    for (Index p = 0; p < pairs; ++p)
      angles[i * static_cast<std::size_t>(pairs) + static_cast<std::size_t>(p)] =
          spe.angle(s.u, s.v, p);
  }
  return rotate_pairs(x, std::span<const double>(angles));
}

template <typename S>
TemporalPositionEmbedding<S> TemporalPositionEmbedding<S>::init(Index max_frames, Index channels,
                                                                std::mt19937_64& rng) {
  return {Tensor<S>::randn({max_frames, channels}, rng, S(0.02), true)};
}

template <typename S>
Tensor<S> TemporalPositionEmbedding<S>::apply(const Tensor<S>& x,
                                              const std::vector<TokenSite>& sites) const {
  if (x.ndim() != 2 || x.dim(0) != static_cast<Index>(sites.size()) || x.dim(1) != table.dim(1))
    throw ShapeError("temporal embedding: " + std::to_string(sites.size()) + " sites, table " +
                     to_string(table.shape()) + ", input " + to_string(x.shape()));
  std::vector<Index> rows(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) rows[i] = sites[i].t;
  return add(x, index_rows(table, std::span<const Index>(rows)));
}

template <typename S>
void TemporalPositionEmbedding<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "table"), table});
}

#define STVSR_INSTANTIATE(S)                                                                   \
  template Tensor<S> insert_registers(const Tensor<S>&, const RegisterLayout&, const Tensor<S>&); \
  template Tensor<S> remove_registers(const Tensor<S>&, const RegisterLayout&);               \
  template Tensor<S> apply_spe(const Tensor<S>&, const std::vector<TokenSite>&,               \
                               const SpatialPositionEncoding&);                               \
  template struct TemporalPositionEmbedding<S>;

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
