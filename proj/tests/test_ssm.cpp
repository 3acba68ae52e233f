#include "stvsr/ssm.hpp"

#include "test_util.hpp"

#include <cmath>
#include <limits>

using namespace stvsr;
using stvsr::testing::check_fn;
using stvsr::testing::grad_ok;
using stvsr::testing::randn_leaf;

namespace {

double max_rel_diff(const Buffer<double>& a, const Buffer<double>& b) {
  const double scale = std::max(1.0, a.abs().maxCoeff());
  return (a - b).abs().maxCoeff() / scale;
}

template <typename S>
Buffer<double> as_double(const Tensor<S>& t) {
  return t.values().template cast<double>();
}

struct Reference {
  Eigen::MatrixXd y;  // [L, E]
  Eigen::MatrixXd h;  // [E, S]
};

// Straight-line recurrence written from the definition, independent of the
// library's projection and scan code.
Reference reference_scan(const Tensord& x, const SsmParams<double>& p, const Eigen::MatrixXd& h0) {
  const Index L = x.dim(0), E = p.d_model, S = p.d_state;
  auto at = [](const Tensord& t, Index r, Index c, Index cols) { return t.values()(r * cols + c); };
  Reference ref{Eigen::MatrixXd::Zero(L, E), h0};
  for (Index t = 0; t < L; ++t) {
    std::vector<double> delta(E), b(S, 0.0), c(S, 0.0);
    for (Index e = 0; e < E; ++e) {
      double z = p.delta_bias.values()(e);
      for (Index k = 0; k < E; ++k) z += at(x, t, k, E) * at(p.delta_weight, k, e, E);
      delta[e] = std::log1p(std::exp(z));
    }
    for (Index s = 0; s < S; ++s)
      for (Index k = 0; k < E; ++k) {
        b[s] += at(x, t, k, E) * at(p.b_weight, k, s, S);
        c[s] += at(x, t, k, E) * at(p.c_weight, k, s, S);
      }
    for (Index e = 0; e < E; ++e) {
      double y = p.skip.values()(e) * at(x, t, e, E);
      for (Index s = 0; s < S; ++s) {
        const double a = -std::exp(at(p.a_log, e, s, S));
        ref.h(e, s) = std::exp(delta[e] * a) * ref.h(e, s) + delta[e] * b[s] * at(x, t, e, E);
        y += c[s] * ref.h(e, s);
      }
      ref.y(t, e) = y;
    }
  }
  return ref;
}

template <typename S>
SsmParams<S> random_params(Index E, Index S_, std::mt19937_64& rng) {
  auto p = SsmParams<S>::init(E, S_, rng);
  // Perturb the deterministic parts so every path is exercised.
  p.a_log = Tensor<S>::randn({E, S_}, rng, S(0.5), true);
  p.skip = Tensor<S>::randn({E}, rng, S(1), true);
  p.delta_bias = Tensor<S>::randn({E}, rng, S(0.5), true);
  return p;
}

Eigen::MatrixXd row_major(const Tensord& t) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.values().data(), t.dim(0), t.dim(1));
}

}  // namespace

TEST(SsmParams, InitInvariants) {
  std::mt19937_64 rng(1);
  auto p = SsmParams<float>::init(6, 16, rng);
  EXPECT_TRUE((p.transition().values() < 0).all());
  auto x = Tensorf::randn({5, 6}, rng, 10.0f);
  // delta = softplus(...) > 0 for every token, even for large inputs.
  auto delta = softplus(add(matmul(x, p.delta_weight), p.delta_bias));
  EXPECT_TRUE((delta.values() > 0).all());
  ParamList<float> list;
  p.collect(list, "ssm");
  EXPECT_EQ(list.size(), 6u);
  EXPECT_EQ(list[0].path.rfind("ssm/", 0), 0u);
}

TEST(SelectiveScan, ZeroInputMatrixGivesSkipOnly) {
  std::mt19937_64 rng(2);
  auto p = random_params<double>(3, 4, rng);
  p.b_weight = Tensord::zeros({3, 4});
  auto x = Tensord::randn({7, 3}, rng);
  for (auto algo : {ScanAlgorithm::sequential, ScanAlgorithm::parallel}) {
    auto r = selective_scan(x, p, SsmState<double>::zeros(3, 4), algo);
    auto expected = mul(x, p.skip);
    EXPECT_TRUE((r.y.values() == expected.values()).all());
    EXPECT_TRUE((r.state.h.values() == 0).all());
  }
}

TEST(SelectiveScan, SingleStepClosedForm) {
  std::mt19937_64 rng(3);
  const Index E = 2, S = 3;
  auto x = Tensord::randn({1, E}, rng), delta = Tensord::uniform({1, E}, rng, 0.1, 1.0);
  auto a = Tensord::uniform({E, S}, rng, -2, -0.1), b = Tensord::randn({1, S}, rng);
  auto c = Tensord::randn({1, S}, rng), d = Tensord::randn({E}, rng);
  auto r = selective_scan_core(x, delta, a, b, c, d, Tensord::zeros({E, S}),
                               ScanAlgorithm::sequential);
  for (Index e = 0; e < E; ++e) {
    double y = d.at(e) * x.at(e);
    for (Index s = 0; s < S; ++s) {
      const double h = delta.at(e) * b.at(s) * x.at(e);
      EXPECT_DOUBLE_EQ(r.state.h.at(e * S + s), h);
      y += c.at(s) * h;
    }
    EXPECT_NEAR(r.y.at(e), y, 1e-15);
  }
}

TEST(SelectiveScan, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(4);
  auto p = random_params<double>(2, 3, rng);
  auto x = Tensord::randn({8, 2}, rng);
  auto h0 = Tensord::randn({2, 3}, rng);
  auto ref = reference_scan(x, p, row_major(h0));
  for (auto algo : {ScanAlgorithm::sequential, ScanAlgorithm::parallel}) {
    auto r = selective_scan(x, p, SsmState<double>{h0}, algo);
    EXPECT_LT((row_major(r.y) - ref.y).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_LT((row_major(r.state.h) - ref.h).cwiseAbs().maxCoeff(), 1e-5);
  }
  // The float path is checked against the same 64-bit oracle.
  SsmParams<float> pf{2, 3, p.a_log.cast<float>(), p.skip.cast<float>(),
                      p.delta_weight.cast<float>(), p.delta_bias.cast<float>(),
                      p.b_weight.cast<float>(), p.c_weight.cast<float>()};
  auto rf = selective_scan(x.cast<float>(), pf, SsmState<float>{h0.cast<float>()});
  EXPECT_LT((row_major(rf.y.cast<double>()) - ref.y).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(SelectiveScan, RejectsNonFiniteInput) {
  std::mt19937_64 rng(5);
  auto p = SsmParams<float>::init(2, 2, rng);
  auto x = Tensorf::randn({4, 2}, rng);
  x.mutable_values()(3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(selective_scan(x, p, SsmState<float>::zeros(2, 2)), std::domain_error);
  x.mutable_values()(3) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(selective_scan(x, p, SsmState<float>::zeros(2, 2)), std::domain_error);
}

TEST(SelectiveScan, RejectsEmptySequenceAndBadShapes) {
  std::mt19937_64 rng(6);
  auto p = SsmParams<float>::init(2, 2, rng);
  EXPECT_THROW(selective_scan(Tensorf::zeros({0, 2}), p, SsmState<float>::zeros(2, 2)),
               ShapeError);
  EXPECT_THROW(selective_scan(Tensorf::zeros({3, 3}), p, SsmState<float>::zeros(2, 2)),
               ShapeError);
  EXPECT_THROW(selective_scan(Tensorf::zeros({3, 2}), p, SsmState<float>::zeros(2, 3)),
               ShapeError);
}

TEST(ParallelScan, LengthOneIsBitIdentical) {
  std::mt19937_64 rng(7);
  auto p = random_params<float>(4, 5, rng);
  auto x = Tensorf::randn({1, 4}, rng);
  auto h0 = SsmState<float>{Tensorf::randn({4, 5}, rng)};
  auto a = selective_scan_sequential(x, p, h0), b = selective_scan_parallel(x, p, h0);
  EXPECT_TRUE(stvsr::testing::bit_equal(a.y, b.y));
  EXPECT_TRUE(stvsr::testing::bit_equal(a.state.h, b.state.h));
}

TEST(ParallelScan, AgreesWithSequentialOnRandomInstances) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<Index> len(1, 256), width(1, 4), state(1, 8);
  for (int i = 0; i < 100; ++i) {
    const Index L = len(rng), E = width(rng), S = state(rng);
    auto p = random_params<float>(E, S, rng);
    auto x = Tensorf::randn({L, E}, rng);
    auto h0 = SsmState<float>{Tensorf::randn({E, S}, rng)};
    auto a = selective_scan_sequential(x, p, h0), b = selective_scan_parallel(x, p, h0);
    EXPECT_LT(max_rel_diff(as_double(a.y), as_double(b.y)), 1e-5) << "L=" << L;
    EXPECT_LT(max_rel_diff(as_double(a.state.h), as_double(b.state.h)), 1e-5) << "L=" << L;
  }
}

TEST(ParallelScan, AgreesAtScale) {
  std::mt19937_64 rng(9);
  EXPECT_EQ(scan_chunk_count(1024), 8);
  EXPECT_EQ(scan_chunk_count(10), 1);
  auto p = random_params<float>(4, 16, rng);
  auto x = Tensorf::randn({1024, 4}, rng);
  auto h0 = SsmState<float>::zeros(4, 16);
  auto a = selective_scan_sequential(x, p, h0), b = selective_scan_parallel(x, p, h0);
  EXPECT_LT(max_rel_diff(as_double(a.y), as_double(b.y)), 1e-5);
  EXPECT_LT(max_rel_diff(as_double(a.state.h), as_double(b.state.h)), 1e-5);
}

TEST(ParallelScan, RepeatedRunsAreBitIdentical) {
  std::mt19937_64 rng(10);
  auto p = random_params<float>(3, 4, rng);
  auto x = Tensorf::randn({500, 3}, rng);
  auto a = selective_scan_parallel(x, p, SsmState<float>::zeros(3, 4));
  auto b = selective_scan_parallel(x, p, SsmState<float>::zeros(3, 4));
  EXPECT_TRUE(stvsr::testing::bit_equal(a.y, b.y));
}

TEST(SelectiveScan, StateHandoff) {
  std::mt19937_64 rng(11);
  for (auto algo : {ScanAlgorithm::sequential, ScanAlgorithm::parallel}) {
    for (Index split : {1, 40, 150}) {
      auto p = random_params<double>(3, 4, rng);
      auto x = Tensord::randn({300, 3}, rng);
      auto h0 = SsmState<double>{Tensord::randn({3, 4}, rng)};
      auto whole = selective_scan(x, p, h0, algo);
      auto first = selective_scan(slice(x, 0, 0, split), p, h0, algo);
      auto second = selective_scan(slice(x, 0, split, 300 - split), p, first.state, algo);
      auto joined = concat<double>({first.y, second.y}, 0);
      EXPECT_LT(max_rel_diff(whole.y.values(), joined.values()), 1e-6);
      EXPECT_LT(max_rel_diff(whole.state.h.values(), second.state.h.values()), 1e-6);
    }
  }
}

TEST(SelectiveScan, ScalarStateStaysWithinGeometricBound) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const Index L = 200;
    auto x = Tensord::uniform({L, 1}, rng, -1, 1);
    auto delta = Tensord::uniform({L, 1}, rng, 0.05, 1.0);
    auto a = Tensord::from({1, 1}, {-std::exp(std::uniform_real_distribution<double>(-2, 1)(rng))});
    auto b = Tensord::uniform({L, 1}, rng, -2, 2);
    double max_decay = 0.0, max_drive = 0.0;
    for (Index t = 0; t < L; ++t) {
      max_decay = std::max(max_decay, std::exp(delta.at(t) * a.item()));
      max_drive = std::max(max_drive, std::abs(delta.at(t) * b.at(t) * x.at(t)));
    }
    const double bound = max_drive / (1.0 - max_decay);
    Tensord h = Tensord::zeros({1, 1});
    // Scan one token at a time so every intermediate state is observed.
    for (Index t = 0; t < L; ++t) {
      auto r = selective_scan_core(slice(x, 0, t, 1), slice(delta, 0, t, 1), a, slice(b, 0, t, 1),
                                   Tensord::full({1, 1}, 1.0), Tensord::zeros({1}), h,
                                   ScanAlgorithm::sequential);
      h = r.state.h;
      ASSERT_LE(std::abs(h.item()), bound * (1 + 1e-12));
    }
  }
}

TEST(SelectiveScan, CoreGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (auto algo : {ScanAlgorithm::sequential, ScanAlgorithm::parallel}) {
    for (Index L : {1, 5, 130}) {
      const Index E = 2, S = 3;
      auto x = randn_leaf({L, E}, rng);
      auto delta = Tensord::uniform({L, E}, rng, 0.1, 1.0, true);
      auto a = Tensord::uniform({E, S}, rng, -1.5, -0.2, true);
      auto b = randn_leaf({L, S}, rng), c = randn_leaf({L, S}, rng);
      auto d = randn_leaf({E}, rng), h0 = randn_leaf({E, S}, rng);
      ParamList<double> in{{"x", x}, {"delta", delta}, {"a", a}, {"b", b},
                           {"c", c}, {"d", d},         {"h0", h0}};
      auto run = [&] {
        auto r = selective_scan_core(x, delta, a, b, c, d, h0, algo);
        return concat<double>({reshape(r.y, {-1}), reshape(r.state.h, {-1})}, 0);
      };
      EXPECT_TRUE(grad_ok(check_fn(run, in))) << "L=" << L;
    }
  }
}

TEST(SelectiveScan, FullGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  auto p = random_params<double>(3, 4, rng);
  auto x = randn_leaf({6, 3}, rng);
  auto h0 = SsmState<double>{randn_leaf({3, 4}, rng)};
  ParamList<double> in{{"x", x}, {"h0", h0.h}};
  p.collect(in, "ssm");
  auto run = [&] {
    auto r = selective_scan(x, p, h0, ScanAlgorithm::sequential);
    return concat<double>({reshape(r.y, {-1}), reshape(r.state.h, {-1})}, 0);
  };
  EXPECT_TRUE(grad_ok(check_fn(run, in)));
}

TEST(Bidirectional, PalindromeSymmetry) {
  std::mt19937_64 rng(15);
  auto p = random_params<double>(3, 4, rng);
  auto half = Tensord::randn({5, 3}, rng);
  auto x = concat<double>({half, slice(reverse_rows(half), 0, 1, 4)}, 0);  // length 9 palindrome
  auto r = bidirectional_scan(x, p, p, SsmState<double>::zeros(3, 4));
  auto flipped = reverse_rows(r.y);
  EXPECT_LT((r.y.values() - flipped.values()).abs().maxCoeff(), 1e-12);
}

TEST(Bidirectional, ZeroInputMatrixDoublesSkip) {
  std::mt19937_64 rng(16);
  auto f = random_params<double>(2, 3, rng), g = random_params<double>(2, 3, rng);
  f.b_weight = Tensord::zeros({2, 3});
  g.b_weight = Tensord::zeros({2, 3});
  g.skip = f.skip;
  auto x = Tensord::randn({6, 2}, rng);
  auto r = bidirectional_scan(x, f, g, SsmState<double>::zeros(2, 3));
  auto expected = mul(mul(x, f.skip), 2.0);
  EXPECT_LT((r.y.values() - expected.values()).abs().maxCoeff(), 1e-15);
}

TEST(Bidirectional, EqualsExplicitTwoPassComposition) {
  std::mt19937_64 rng(17);
  auto f = random_params<double>(3, 2, rng), g = random_params<double>(3, 2, rng);
  auto x = Tensord::randn({11, 3}, rng);
  auto h0 = SsmState<double>{Tensord::randn({3, 2}, rng)};
  auto r = bidirectional_scan(x, f, g, h0);
  const Index L = 11;
  auto fwd = reference_scan(x, f, row_major(h0.h));
  Buffer<double> rv(x.numel());
  for (Index t = 0; t < L; ++t)
    for (Index e = 0; e < 3; ++e) rv(t * 3 + e) = x.values()((L - 1 - t) * 3 + e);
  auto bwd = reference_scan(Tensord({L, 3}, rv), g, Eigen::MatrixXd::Zero(3, 2));
  Eigen::MatrixXd expected = fwd.y + bwd.y.colwise().reverse();
  EXPECT_LT((row_major(r.y) - expected).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((row_major(r.state.h) - fwd.h).cwiseAbs().maxCoeff(), 1e-10);
}
