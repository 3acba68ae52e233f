#include "stvsr/sequencing.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace stvsr;
using stvsr::testing::bit_equal;
using stvsr::testing::check_fn;
using stvsr::testing::grad_ok;

namespace {

bool is_bijection(const ScanOrder& o) {
  std::vector<Index> sorted = o.forward;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (sorted[i] != static_cast<Index>(i)) return false;
  for (std::size_t i = 0; i < o.forward.size(); ++i)
    if (o.inverse[static_cast<std::size_t>(o.forward[i])] != static_cast<Index>(i)) return false;
  return true;
}

}  // namespace

TEST(MasmOrders, SinglePosition) {
  auto orders = masm_orders(1, 1);
  for (const auto& o : orders) EXPECT_EQ(o.forward, (std::vector<Index>{0, 1}));
}

TEST(MasmOrders, OneByTwoRowForward) {
  auto orders = masm_orders(1, 2);
  EXPECT_EQ(orders[0].direction, ScanDirection::row_forward);
  EXPECT_EQ(orders[0].forward, (std::vector<Index>{0, 2, 1, 3}));
  EXPECT_EQ(orders[1].forward, (std::vector<Index>{1, 3, 0, 2}));
}

TEST(MasmOrders, TwoByTwoAllDirections) {
  // Layout [A00,A01,A10,A11,B00,B01,B10,B11].
  auto o = masm_orders(2, 2);
  EXPECT_EQ(o[0].forward, (std::vector<Index>{0, 4, 1, 5, 2, 6, 3, 7}));
  EXPECT_EQ(o[1].forward, (std::vector<Index>{3, 7, 2, 6, 1, 5, 0, 4}));
  EXPECT_EQ(o[2].forward, (std::vector<Index>{0, 4, 2, 6, 1, 5, 3, 7}));
  EXPECT_EQ(o[3].forward, (std::vector<Index>{3, 7, 1, 5, 2, 6, 0, 4}));
  EXPECT_EQ(to_string(o[3].direction), "col-");
}

TEST(MasmOrders, AlternationAndBijectionUpToEightByEight) {
  for (Index h = 1; h <= 8; ++h)
    for (Index w = 1; w <= 8; ++w)
      for (const auto& o : masm_orders(h, w)) {
        ASSERT_EQ(o.size(), 2 * h * w);
        ASSERT_TRUE(is_bijection(o));
        for (Index i = 0; i < o.size(); ++i) {
          const bool from_a = o.forward[static_cast<std::size_t>(i)] < h * w;
          ASSERT_EQ(from_a, i % 2 == 0) << h << "x" << w << " slot " << i;
        }
        // Both tokens at a slot pair share the same spatial cell.
        for (Index i = 0; i < o.size(); i += 2)
          ASSERT_EQ(o.forward[static_cast<std::size_t>(i)] + h * w,
                    o.forward[static_cast<std::size_t>(i + 1)]);
      }
}

TEST(MasmOrders, RejectsEmptyGrid) {
  EXPECT_THROW(masm_orders(0, 3), std::invalid_argument);
  EXPECT_THROW(vim_order(2, 0), std::invalid_argument);
}

TEST(VimOrder, RasterIdentity) {
  EXPECT_EQ(vim_order(1, 1).forward, (std::vector<Index>{0}));
  EXPECT_EQ(vim_order(2, 2).forward, (std::vector<Index>{0, 1, 2, 3}));
}

TEST(ScanOrders, GatherScatterRoundTripOnRandomSizes) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Index> e(1, 9);
  for (int i = 0; i < 20; ++i) {
    const Index h = e(rng), w = e(rng);
    auto x = Tensorf::randn({2 * h * w, 3}, rng);
    for (const auto& o : masm_orders(h, w)) {
      auto g = gather_permute(x, std::span<const Index>(o.forward));
      EXPECT_TRUE(bit_equal(scatter_permute(g, std::span<const Index>(o.forward)), x));
      EXPECT_TRUE(bit_equal(gather_permute(g, std::span<const Index>(o.inverse)), x));
    }
    auto v = vim_order(h, w);
    EXPECT_TRUE(is_bijection(v));
  }
}

TEST(ScanOrder, RejectsNonPermutation) {
  EXPECT_THROW(ScanOrder::from_forward({0, 0}, ScanDirection::row_forward), std::invalid_argument);
  EXPECT_THROW(ScanOrder::from_forward({0, 2}, ScanDirection::row_forward), std::invalid_argument);
}

TEST(Registers, NoRegistersIsIdentity) {
  std::mt19937_64 rng(2);
  auto x = Tensorf::randn({5, 3}, rng);
  auto layout = RegisterLayout::uniform(5, 0);
  EXPECT_TRUE(bit_equal(insert_registers(x, layout, Tensorf::zeros({0, 3})), x));
  EXPECT_TRUE(layout.positions.empty());
}

TEST(Registers, FourTokensTwoRegisters) {
  std::mt19937_64 rng(3);
  auto x = Tensorf::randn({4, 2}, rng), r = Tensorf::randn({2, 2}, rng);
  auto layout = RegisterLayout::uniform(4, 2);
  auto y = insert_registers(x, layout, r);
  EXPECT_EQ(y.shape(), (Shape{6, 2}));
  EXPECT_EQ(layout.positions, (std::vector<Index>{2, 5}));
  EXPECT_TRUE(bit_equal(remove_registers(y, layout), x));
  EXPECT_EQ(y.at(2 * 2), r.at(0));
  EXPECT_EQ(y.at(5 * 2 + 1), r.at(3));
}

TEST(Registers, NineTokensThreeRegistersEvenlySpaced) {
  auto layout = RegisterLayout::uniform(9, 3);
  // Register j after min(j * ceil(9/3), 9) content tokens, shifted by j-1 earlier registers.
  EXPECT_EQ(layout.positions, (std::vector<Index>{3, 7, 11}));
  auto uneven = RegisterLayout::uniform(10, 4);  // ceil(10/4) = 3
  EXPECT_EQ(uneven.positions, (std::vector<Index>{3, 7, 11, 13}));
}

TEST(Registers, RoundTripIsBitExactForAllSmallLayouts) {
  std::mt19937_64 rng(4);
  for (Index L = 1; L <= 64; ++L)
    for (Index n = 0; n <= 8; ++n) {
      auto layout = RegisterLayout::uniform(L, n);
      ASSERT_EQ(static_cast<Index>(layout.positions.size()), n);
      for (std::size_t j = 1; j < layout.positions.size(); ++j)
        ASSERT_LT(layout.positions[j - 1], layout.positions[j]);
      auto x = Tensorf::randn({L, 2}, rng), r = Tensorf::randn({n, 2}, rng);
      ASSERT_TRUE(bit_equal(remove_registers(insert_registers(x, layout, r), layout), x));
    }
}

TEST(Registers, PerFrameLayoutSharesVectors) {
  auto layout = RegisterLayout::per_frame(2, 4, 2);
  EXPECT_EQ(layout.total_len(), 12);
  EXPECT_EQ(layout.positions, (std::vector<Index>{2, 5, 8, 11}));
  auto x = Tensord::from({8, 1}, {0, 1, 2, 3, 4, 5, 6, 7}, true);
  auto r = Tensord::from({2, 1}, {-1, -2}, true);
  auto y = insert_registers(x, layout, r);
  std::vector<double> expect{0, 1, -1, 2, 3, -2, 4, 5, -1, 6, 7, -2};
  for (Index i = 0; i < 12; ++i) EXPECT_EQ(y.at(i), expect[static_cast<std::size_t>(i)]);
  backward(sum(y));
  EXPECT_EQ(r.grad()(0), 2.0);  // used once per frame
  auto sites = frame_sites(2, 2, 2, layout);
  EXPECT_TRUE(sites[5].is_register);
  EXPECT_EQ(sites[5].t, 0);
  EXPECT_EQ(sites[8].t, 1);
  EXPECT_EQ(sites[10].u, 1);
  EXPECT_EQ(sites[10].v, 1);
}

TEST(Registers, LengthMismatchThrows) {
  auto layout = RegisterLayout::uniform(4, 2);
  EXPECT_THROW(insert_registers(Tensorf::zeros({5, 2}), layout, Tensorf::zeros({2, 2})),
               ShapeError);
  EXPECT_THROW(remove_registers(Tensorf::zeros({5, 2}), layout), ShapeError);
  EXPECT_THROW(insert_registers(Tensorf::zeros({4, 2}), layout, Tensorf::zeros({3, 2})),
               ShapeError);
}

TEST(Spe, FrequenciesAndIdentityAtOrigin) {
  auto spe = build_spe(4, 4, 8);
  ASSERT_EQ(spe.frequencies().size(), 2u);
  EXPECT_DOUBLE_EQ(spe.frequencies()[0], std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(spe.frequencies()[1], std::numbers::pi);
  for (Index p = 0; p < 4; ++p) EXPECT_EQ(spe.angle(0, 0, p), 0.0);
  EXPECT_DOUBLE_EQ(spe.angle(3, 1, 1), 3 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(spe.angle(3, 1, 3), std::numbers::pi);

  std::mt19937_64 rng(5);
  auto x = Tensorf::randn({1, 8}, rng);
  auto y = apply_spe(x, {{false, 0, 0, 0}}, spe);
  EXPECT_TRUE(bit_equal(x, y));
}

TEST(Spe, FlooredFrequencyRule) {
  auto spe = build_spe(2, 2, 12, FrequencyRule::floored);
  EXPECT_EQ(spe.frequencies(), (std::vector<double>{1, 3, 4}));
}

TEST(Spe, RejectsIndivisibleWidthAndMissingCoordinates) {
  EXPECT_THROW(build_spe(2, 2, 6), std::invalid_argument);
  auto spe = build_spe(2, 2, 4);
  EXPECT_THROW(apply_spe(Tensorf::zeros({1, 4}), {{false, 0, -1, -1}}, spe),
               std::invalid_argument);
  EXPECT_THROW(apply_spe(Tensorf::zeros({1, 4}), {{false, 0, 2, 0}}, spe), std::out_of_range);
}

TEST(Spe, MatchesRotationMatrixAndPreservesNorm) {
  std::mt19937_64 rng(6);
  auto spe = build_spe(8, 8, 8);
  auto x = Tensord::randn({1, 8}, rng);
  auto y = apply_spe(x, {{false, 0, 3, 5}}, spe);
  for (Index p = 0; p < 4; ++p) {
    const double th = (p < 2 ? 3.0 : 5.0) * (std::numbers::pi * static_cast<double>(p % 2 + 1) / 2);
    Eigen::Matrix2d rot;
    rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Eigen::Vector2d in(x.at(2 * p), x.at(2 * p + 1));
    Eigen::Vector2d out = rot * in;
    EXPECT_NEAR(y.at(2 * p), out(0), 1e-12);
    EXPECT_NEAR(y.at(2 * p + 1), out(1), 1e-12);
  }
  EXPECT_NEAR(std::sqrt(y.values().square().sum()), std::sqrt(x.values().square().sum()), 1e-6);

  auto batch = Tensorf::randn({32, 8}, rng);
  auto sites = frame_sites(2, 4, 4);
  auto rotated = apply_spe(batch, sites, spe);
  for (Index i = 0; i < 32; ++i) {
    const double a = batch.values().segment(i * 8, 8).cast<double>().matrix().norm();
    const double b = rotated.values().segment(i * 8, 8).cast<double>().matrix().norm();
    EXPECT_NEAR(a, b, 1e-5 * std::max(1.0, a));
  }
}

TEST(Spe, RelativePositionInnerProduct) {
  std::mt19937_64 rng(7);
  auto spe = build_spe(8, 8, 16, FrequencyRule::floored);  // non-periodic angles
  auto c = Tensord::randn({1, 16}, rng);
  auto x = concat<double>({c, c}, 0);
  auto dot = [&](Index u1, Index v1, Index u2, Index v2) {
    auto y = apply_spe(x, {{false, 0, u1, v1}, {false, 0, u2, v2}}, spe);
    return (y.values().head(16) * y.values().tail(16)).sum();
  };
  EXPECT_NEAR(dot(0, 0, 2, 0), dot(5, 0, 7, 0), 1e-5);
  EXPECT_NEAR(dot(1, 3, 4, 6), dot(2, 0, 5, 3), 1e-5);
  auto scaled = build_spe(8, 8, 16);
  auto y1 = apply_spe(x, {{false, 0, 0, 0}, {false, 0, 2, 0}}, scaled);
  auto y2 = apply_spe(x, {{false, 0, 5, 0}, {false, 0, 7, 0}}, scaled);
  EXPECT_NEAR((y1.values().head(16) * y1.values().tail(16)).sum(),
              (y2.values().head(16) * y2.values().tail(16)).sum(), 1e-5);
}

TEST(Spe, RegistersPassThrough) {
  std::mt19937_64 rng(8);
  auto spe = build_spe(2, 2, 4);
  auto layout = RegisterLayout::per_frame(1, 4, 2);
  auto sites = frame_sites(1, 2, 2, layout);
  auto x = Tensorf::randn({6, 4}, rng);
  auto y = apply_spe(x, sites, spe);
  for (Index p : layout.positions)
    for (Index c = 0; c < 4; ++c) EXPECT_EQ(y.at(p * 4 + c), x.at(p * 4 + c));
}

TEST(Spe, GradientIsInverseRotation) {
  std::mt19937_64 rng(9);
  auto spe = build_spe(3, 3, 8);
  auto x = stvsr::testing::randn_leaf({9, 8}, rng);
  auto sites = frame_sites(1, 3, 3);
  EXPECT_TRUE(grad_ok(check_fn([&] { return apply_spe(x, sites, spe); }, {{"x", x}})));
}

TEST(TemporalEmbedding, AddsPerFrameRowsAndLearns) {
  std::mt19937_64 rng(10);
  auto tpe = TemporalPositionEmbedding<double>::init(4, 3, rng);
  auto layout = RegisterLayout::per_frame(3, 2, 1);
  auto sites = frame_sites(3, 1, 2, layout);
  auto x = Tensord::randn({9, 3}, rng);
  auto y = tpe.apply(x, sites);
  EXPECT_EQ(y.shape(), x.shape());
  for (Index i = 0; i < 9; ++i)
    for (Index c = 0; c < 3; ++c)
      EXPECT_DOUBLE_EQ(y.at(i * 3 + c),
                       x.at(i * 3 + c) + tpe.table.at(sites[static_cast<std::size_t>(i)].t * 3 + c));
  ParamList<double> params;
  tpe.collect(params, "tpe");
  EXPECT_EQ(params[0].path, "tpe/table");
  EXPECT_TRUE(grad_ok(check_fn([&] { return square(tpe.apply(x, sites)); }, params)));
}
