#include "stvsr/suites.hpp"

#include "stvsr/data.hpp"
#include "stvsr/gradcheck.hpp"
#include "stvsr/model.hpp"
#include "stvsr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

namespace stvsr::suites {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

gradcheck::Options fd_options(std::uint64_t seed) {
  gradcheck::Options o;
  o.step = 1e-6;
  o.abs_tol = 1e-7;
  o.rel_tol = 1e-3;
  o.coords_per_tensor = 3;
  o.directions = 2;
  o.seed = seed;
  return o;
}

/// One random gradient instance: a function rebuilding the output from `inputs`.
struct Probe {
  std::function<Tensord()> f;
  ParamList<double> inputs;
};

using Builder = std::function<Probe(std::mt19937_64&)>;

Result run_gradient(const std::string& name, Index instances, std::uint64_t seed, const Builder& build) {
  const auto t0 = Clock::now();
  Result r;
  r.name = name;
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < instances; ++i) {
    std::string where;
    try {
      Probe p = build(rng);
      const auto proj_seed = rng();
      const auto rep = gradcheck::check([&] { return gradcheck::random_projection(p.f(), proj_seed); },
                                        p.inputs, fd_options(rng()));
      r.worst = std::max(r.worst, rep.worst_error);
      if (!rep.ok) where = "error " + std::to_string(rep.worst_error) + " at " + rep.worst_where;
    } catch (const std::exception& e) {
      where = std::string("threw: ") + e.what();
    }
    ++r.instances;
    if (!where.empty()) {
      if (r.ok) r.detail = "instance " + std::to_string(i) + ": " + where;
      r.ok = false;
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

Index pick(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

bool coin(std::mt19937_64& rng) { return std::bernoulli_distribution(0.5)(rng); }

Tensord leaf(Shape s, std::mt19937_64& rng, double sd = 1.0) {
  return Tensord::randn(std::move(s), rng, sd, true);
}

Shape random_shape(std::mt19937_64& rng, Index min_rank, Index max_rank, Index max_extent) {
  Shape s(static_cast<std::size_t>(pick(rng, min_rank, max_rank)));
  for (auto& d : s) d = pick(rng, 1, max_extent);
  return s;
}

/// A suffix of `a` with some extents collapsed to 1, so it broadcasts against `a`.
Shape broadcastable(const Shape& a, std::mt19937_64& rng) {
  const auto drop = static_cast<std::size_t>(pick(rng, 0, static_cast<Index>(a.size()) - 1));
  Shape b(a.begin() + static_cast<std::ptrdiff_t>(drop), a.end());
  for (auto& d : b)
    if (coin(rng)) d = 1;
  return b;
}

/// Tensor with entries bounded away from zero: |x| in [0.5, 2].
Tensord away_from_zero(Shape s, std::mt19937_64& rng) {
  Tensord t = Tensord::uniform(std::move(s), rng, 0.5, 2.0, true);
  auto& v = t.mutable_values();
  for (Index i = 0; i < v.size(); ++i)
    if (coin(rng)) v(i) = -v(i);
  return t;
}

template <typename S>
SsmParams<S> perturbed_params(Index e, Index s, std::mt19937_64& rng) {
  auto p = SsmParams<S>::init(e, s, rng);
  p.a_log = Tensor<S>::randn({e, s}, rng, S(0.5), true);
  p.skip = Tensor<S>::randn({e}, rng, S(1), true);
  p.delta_bias = Tensor<S>::randn({e}, rng, S(0.5), true);
  return p;
}

Tensord flat_pair(const ScanResult<double>& r) {
  return concat<double>({reshape(r.y, {-1}), reshape(r.state.h, {-1})}, 0);
}

std::vector<Index> random_permutation(Index n, std::mt19937_64& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

Probe unary(std::mt19937_64& rng, const std::function<Tensord(const Tensord&)>& op, bool positive = false) {
  Shape s = random_shape(rng, 1, 3, 5);
  Tensord x = positive ? Tensord::uniform(s, rng, 0.5, 2.0, true) : leaf(s, rng);
  return {[=] { return op(x); }, {{"x", x}}};
}

Probe binary(std::mt19937_64& rng, const std::function<Tensord(const Tensord&, const Tensord&)>& op,
             bool nonzero_rhs = false) {
  Shape a = random_shape(rng, 1, 3, 4);
  Shape b = broadcastable(a, rng);
  if (coin(rng)) std::swap(a, b);
  Tensord x = leaf(a, rng);
  Tensord y = nonzero_rhs ? away_from_zero(b, rng) : leaf(b, rng);
  return {[=] { return op(x, y); }, {{"a", x}, {"b", y}}};
}

std::vector<std::pair<std::string, Builder>> primitive_builders() {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("add", [](auto& rng) { return binary(rng, [](auto& x, auto& y) { return add(x, y); }); });
  b.emplace_back("sub", [](auto& rng) { return binary(rng, [](auto& x, auto& y) { return sub(x, y); }); });
  b.emplace_back("mul", [](auto& rng) { return binary(rng, [](auto& x, auto& y) { return mul(x, y); }); });
  b.emplace_back("div", [](auto& rng) { return binary(rng, [](auto& x, auto& y) { return div(x, y); }, true); });
  b.emplace_back("add_scalar", [](auto& rng) {
    const double c = std::normal_distribution<double>()(rng);
    return unary(rng, [c](auto& x) { return add(x, c); });
  });
  b.emplace_back("mul_scalar", [](auto& rng) {
    const double c = std::normal_distribution<double>()(rng);
    return unary(rng, [c](auto& x) { return mul(x, c); });
  });
  b.emplace_back("neg", [](auto& rng) { return unary(rng, [](auto& x) { return neg(x); }); });
  b.emplace_back("relu", [](auto& rng) { return unary(rng, [](auto& x) { return relu(x); }); });
  b.emplace_back("leaky_relu", [](auto& rng) { return unary(rng, [](auto& x) { return leaky_relu(x, 0.1); }); });
  b.emplace_back("sigmoid", [](auto& rng) { return unary(rng, [](auto& x) { return sigmoid(x); }); });
  b.emplace_back("tanh", [](auto& rng) { return unary(rng, [](auto& x) { return stvsr::tanh(x); }); });
  b.emplace_back("exp", [](auto& rng) { return unary(rng, [](auto& x) { return stvsr::exp(x); }); });
  b.emplace_back("softplus", [](auto& rng) { return unary(rng, [](auto& x) { return softplus(x); }); });
  b.emplace_back("silu", [](auto& rng) { return unary(rng, [](auto& x) { return silu(x); }); });
  b.emplace_back("sqrt", [](auto& rng) { return unary(rng, [](auto& x) { return stvsr::sqrt(x); }, true); });
  b.emplace_back("square", [](auto& rng) { return unary(rng, [](auto& x) { return square(x); }); });
  b.emplace_back("sum", [](auto& rng) { return unary(rng, [](auto& x) { return sum(x); }); });
  b.emplace_back("mean", [](auto& rng) { return unary(rng, [](auto& x) { return mean(x); }); });
  b.emplace_back("sum_axis", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 1, 4, 4), rng);
    const int axis = static_cast<int>(pick(rng, 0, x.ndim() - 1));
    const bool keep = coin(rng);
    return Probe{[=] { return sum(x, axis, keep); }, {{"x", x}}};
  });
  b.emplace_back("mean_axis", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 1, 4, 4), rng);
    const int axis = static_cast<int>(pick(rng, 0, x.ndim() - 1));
    const bool keep = coin(rng);
    return Probe{[=] { return mean(x, axis, keep); }, {{"x", x}}};
  });
  b.emplace_back("matmul", [](auto& rng) {
    const Index m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4), batch = pick(rng, 1, 3);
    Shape sa{m, k}, sb{k, n};
    switch (pick(rng, 0, 2)) {
      case 1: sa.insert(sa.begin(), batch); break;
      case 2:
        sa.insert(sa.begin(), coin(rng) ? batch : 1);
        sb.insert(sb.begin(), batch);
        break;
      default: break;
    }
    Tensord a = leaf(sa, rng), c = leaf(sb, rng);
    return Probe{[=] { return matmul(a, c); }, {{"a", a}, {"b", c}}};
  });
  b.emplace_back("conv2d", [](auto& rng) {
    const Index ci = pick(rng, 1, 3), co = pick(rng, 1, 3), k = pick(rng, 1, 3);
    Conv2dOptions opt;
    opt.stride = {pick(rng, 1, 2), pick(rng, 1, 2)};
    opt.padding = {pick(rng, 0, 1), pick(rng, 0, 1)};
    Tensord x = leaf({ci, pick(rng, k, 6), pick(rng, k, 6)}, rng), w = leaf({co, ci, k, k}, rng);
    Probe p{nullptr, {{"x", x}, {"w", w}}};
    Tensord bias;
    if (coin(rng)) {
      bias = leaf({co}, rng);
      p.inputs.push_back({"bias", bias});
    }
    p.f = [=] { return conv2d(x, w, bias, opt); };
    return p;
  });
  b.emplace_back("conv3d", [](auto& rng) {
    const Index ci = pick(rng, 1, 2), co = pick(rng, 1, 2), kt = pick(rng, 1, 3), k = pick(rng, 1, 2);
    Conv3dOptions opt;
    opt.stride = {pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 1, 2)};
    opt.padding = {pick(rng, 0, 1), pick(rng, 0, 1), pick(rng, 0, 1)};
    Tensord x = leaf({ci, pick(rng, kt, 4), pick(rng, k, 4), pick(rng, k, 4)}, rng);
    Tensord w = leaf({co, ci, kt, k, k}, rng), bias = leaf({co}, rng);
    return Probe{[=] { return conv3d(x, w, bias, opt); }, {{"x", x}, {"w", w}, {"bias", bias}}};
  });
  b.emplace_back("take", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 1, 3, 4), rng);
    const Index n = pick(rng, 1, 12);
    std::vector<Index> src(static_cast<std::size_t>(n));
    for (auto& s : src) s = pick(rng, 0, x.numel() - 1);
    return Probe{[=] { return take(x, {n}, src); }, {{"x", x}}};
  });
  b.emplace_back("reshape", [](auto& rng) {
    const Index a = pick(rng, 1, 4), c = pick(rng, 1, 4), d = pick(rng, 1, 4);
    Tensord x = leaf({a, c * d}, rng);
    return Probe{[=] { return mul(reshape(x, {c, a, d}), reshape(x, {c, a, d})); }, {{"x", x}}};
  });
  b.emplace_back("permute", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 1, 4, 4), rng);
    std::vector<int> axes(static_cast<std::size_t>(x.ndim()));
    std::iota(axes.begin(), axes.end(), 0);
    std::shuffle(axes.begin(), axes.end(), rng);
    return Probe{[=] { return permute(x, axes); }, {{"x", x}}};
  });
  b.emplace_back("transpose", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 2, 4, 4), rng);
    return Probe{[=] { return transpose(x); }, {{"x", x}}};
  });
  b.emplace_back("slice", [](auto& rng) {
    Tensord x = leaf(random_shape(rng, 1, 3, 5), rng);
    const int axis = static_cast<int>(pick(rng, 0, x.ndim() - 1));
    const Index start = pick(rng, 0, x.dim(axis) - 1);
    const Index length = pick(rng, 1, x.dim(axis) - start);
    return Probe{[=] { return slice(x, axis, start, length); }, {{"x", x}}};
  });
  b.emplace_back("concat", [](auto& rng) {
    Shape base = random_shape(rng, 1, 3, 4);
    const int axis = static_cast<int>(pick(rng, 0, static_cast<Index>(base.size()) - 1));
    Probe p;
    std::vector<Tensord> parts;
    for (Index i = 0, n = pick(rng, 1, 3); i < n; ++i) {
      Shape s = base;
      s[static_cast<std::size_t>(axis)] = pick(rng, 1, 3);
      parts.push_back(leaf(s, rng));
      p.inputs.push_back({"p" + std::to_string(i), parts.back()});
    }
    p.f = [=] { return concat(parts, axis); };
    return p;
  });
  b.emplace_back("index_rows", [](auto& rng) {
    Tensord x = leaf({pick(rng, 1, 6), pick(rng, 1, 3)}, rng);
    std::vector<Index> rows(static_cast<std::size_t>(pick(rng, 1, 8)));
    for (auto& r : rows) r = pick(rng, 0, x.dim(0) - 1);
    return Probe{[=] { return index_rows<double>(x, rows); }, {{"x", x}}};
  });
  b.emplace_back("gather_permute", [](auto& rng) {
    Tensord x = leaf({pick(rng, 1, 8), pick(rng, 1, 3)}, rng);
    auto order = random_permutation(x.dim(0), rng);
    return Probe{[=] { return gather_permute<double>(x, order); }, {{"x", x}}};
  });
  b.emplace_back("scatter_permute", [](auto& rng) {
    Tensord x = leaf({pick(rng, 1, 8), pick(rng, 1, 3)}, rng);
    auto order = random_permutation(x.dim(0), rng);
    return Probe{[=] { return scatter_permute<double>(x, order); }, {{"x", x}}};
  });
  b.emplace_back("pixel_shuffle", [](auto& rng) {
    const Index r = pick(rng, 1, 3);
    Tensord x = leaf({pick(rng, 1, 2) * r * r, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
    return Probe{[=] { return pixel_shuffle(x, r); }, {{"x", x}}};
  });
  b.emplace_back("pixel_unshuffle", [](auto& rng) {
    const Index r = pick(rng, 1, 3);
    Tensord x = leaf({pick(rng, 1, 2), pick(rng, 1, 3) * r, pick(rng, 1, 3) * r}, rng);
    return Probe{[=] { return pixel_unshuffle(x, r); }, {{"x", x}}};
  });
  b.emplace_back("avg_pool2", [](auto& rng) {
    Tensord x = leaf({pick(rng, 1, 3), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3)}, rng);
    return Probe{[=] { return avg_pool2(x); }, {{"x", x}}};
  });
  b.emplace_back("upsample_bilinear2", [](auto& rng) {
    Tensord x = leaf({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
    return Probe{[=] { return upsample_bilinear2(x); }, {{"x", x}}};
  });
  b.emplace_back("rotate_pairs", [](auto& rng) {
    const Index l = pick(rng, 1, 5), c = 2 * pick(rng, 1, 3);
    Tensord x = leaf({l, c}, rng);
    std::vector<double> angles(static_cast<std::size_t>(l * c / 2));
    for (auto& a : angles) a = std::uniform_real_distribution<double>(-4, 4)(rng);
    return Probe{[=] { return rotate_pairs<double>(x, angles); }, {{"x", x}}};
  });
  b.emplace_back("scan_core", [](auto& rng) {
    const Index l = pick(rng, 1, 160), e = pick(rng, 1, 3), s = pick(rng, 1, 4);
    const auto algo = coin(rng) ? ScanAlgorithm::parallel : ScanAlgorithm::sequential;
    Tensord x = leaf({l, e}, rng), delta = Tensord::uniform({l, e}, rng, 0.1, 1.0, true);
    Tensord a = Tensord::uniform({e, s}, rng, -1.5, -0.2, true);
    Tensord bb = leaf({l, s}, rng), c = leaf({l, s}, rng), d = leaf({e}, rng), h0 = leaf({e, s}, rng);
    return Probe{[=] { return flat_pair(selective_scan_core(x, delta, a, bb, c, d, h0, algo)); },
                 {{"x", x}, {"delta", delta}, {"a", a}, {"b", bb}, {"c", c}, {"d", d}, {"h0", h0}}};
  });
  b.emplace_back("selective_scan", [](auto& rng) {
    const Index l = pick(rng, 1, 24), e = pick(rng, 1, 3), s = pick(rng, 1, 4);
    const auto algo = coin(rng) ? ScanAlgorithm::parallel : ScanAlgorithm::sequential;
    auto p = perturbed_params<double>(e, s, rng);
    Tensord x = leaf({l, e}, rng);
    SsmState<double> h0{leaf({e, s}, rng)};
    Probe probe{[=] { return flat_pair(selective_scan(x, p, h0, algo)); }, {{"x", x}, {"h0", h0.h}}};
    p.collect(probe.inputs, "ssm");
    return probe;
  });
  b.emplace_back("bidirectional_scan", [](auto& rng) {
    const Index l = pick(rng, 1, 24), e = pick(rng, 1, 3), s = pick(rng, 1, 4);
    const auto algo = coin(rng) ? ScanAlgorithm::parallel : ScanAlgorithm::sequential;
    auto fwd = perturbed_params<double>(e, s, rng), bwd = perturbed_params<double>(e, s, rng);
    Tensord x = leaf({l, e}, rng);
    SsmState<double> h0{leaf({e, s}, rng)};
    Probe probe{[=] { return flat_pair(bidirectional_scan(x, fwd, bwd, h0, algo)); },
                {{"x", x}, {"h0", h0.h}}};
    fwd.collect(probe.inputs, "fwd");
    bwd.collect(probe.inputs, "bwd");
    return probe;
  });
  b.emplace_back("insert_registers", [](auto& rng) {
    const Index frames = pick(rng, 1, 3), len = pick(rng, 1, 6), n = pick(rng, 1, 3);
    const auto layout = RegisterLayout::per_frame(frames, len, n);
    Tensord x = leaf({frames * len, 2}, rng), r = leaf({layout.distinct_registers, 2}, rng);
    return Probe{[=] { return insert_registers(x, layout, r); }, {{"x", x}, {"registers", r}}};
  });
  b.emplace_back("remove_registers", [](auto& rng) {
    const auto layout = RegisterLayout::uniform(pick(rng, 1, 12), pick(rng, 1, 4));
    Tensord x = leaf({layout.total_len(), 3}, rng);
    return Probe{[=] { return remove_registers(x, layout); }, {{"x", x}}};
  });
  b.emplace_back("apply_spe", [](auto& rng) {
    const Index frames = pick(rng, 1, 2), h = pick(rng, 1, 4), w = pick(rng, 1, 4), d = 4 * pick(rng, 1, 2);
    const auto layout = RegisterLayout::per_frame(frames, h * w, pick(rng, 0, 2));
    const auto sites = frame_sites(frames, h, w, layout);
    const auto spe = build_spe(h, w, d, coin(rng) ? FrequencyRule::scaled : FrequencyRule::floored);
    Tensord x = leaf({layout.total_len(), d}, rng);
    return Probe{[=] { return apply_spe(x, sites, spe); }, {{"x", x}}};
  });
  b.emplace_back("temporal_embedding", [](auto& rng) {
    const Index frames = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 1, 3), c = pick(rng, 1, 4);
    const auto layout = RegisterLayout::per_frame(frames, h * w, pick(rng, 0, 2));
    const auto sites = frame_sites(frames, h, w, layout);
    auto tpe = TemporalPositionEmbedding<double>::init(frames + pick(rng, 0, 2), c, rng);
    tpe.table = leaf(tpe.table.shape(), rng);
    Tensord x = leaf({layout.total_len(), c}, rng);
    Probe probe{[=] { return tpe.apply(x, sites); }, {{"x", x}}};
    tpe.collect(probe.inputs, "tpe");
    return probe;
  });
  return b;
}

/// Small random architecture around `base`'s switches.
ModelConfig small_config(const ModelConfig& base, std::mt19937_64& rng) {
  ModelConfig c = base;
  c.channels = 4 * pick(rng, 1, 2);
  c.d_state = pick(rng, 1, 3);
  c.expand = pick(rng, 1, 2);
  c.registers = pick(rng, 1, 3);
  c.residual_blocks = 1;
  c.attention_reduction = 2;
  c.pyramid_levels = pick(rng, 1, 2);
  c.init = InitMode::random;
  c.scan = coin(rng) ? ScanAlgorithm::parallel : ScanAlgorithm::sequential;
  return c;
}

void randomize_registers(MambaVrBlock<double>& b, std::mt19937_64& rng) {
  if (b.registers.defined() && b.registers.numel() > 0)
    b.registers = Tensord::randn(b.registers.shape(), rng, 0.5, true);
}

}  // namespace

std::vector<Result> primitive_gradients(Index instances, std::uint64_t seed) {
  std::vector<Result> out;
  std::uint64_t s = seed;
  for (const auto& [name, build] : primitive_builders()) out.push_back(run_gradient(name, instances, s++, build));
  return out;
}

std::vector<Result> block_gradients(const ModelConfig& base, Index instances, std::uint64_t seed) {
  std::vector<Result> out;
  out.push_back(run_gradient("feature_extractor", instances, seed, [&](std::mt19937_64& rng) {
    auto cfg = small_config(base, rng);
    auto f = FeatureExtractor<double>::init(cfg, rng);
    Tensord x = leaf({3, pick(rng, 8, 10), pick(rng, 8, 10)}, rng, 0.5);
    Probe p{[=] { return f(x); }, {{"frame", x}}};
    f.collect(p.inputs, "extractor");
    return p;
  }));
  out.push_back(run_gradient("global_fusion", instances, seed + 1, [&](std::mt19937_64& rng) {
    auto cfg = small_config(base, rng);
    cfg.tie_gfm_branches = coin(rng);
    auto g = GlobalFusion<double>::init(cfg, rng);
    const Index unit = Index{1} << (cfg.pyramid_levels - 1);
    const Index h = unit * pick(rng, 1, 2), w = unit * pick(rng, 1, 2);
    Tensord a = leaf({cfg.channels, h, w}, rng), b = leaf({cfg.channels, h, w}, rng);
    Probe p{[=] { return g(a, b); }, {{"prev", a}, {"next", b}}};
    g.collect(p.inputs, "fusion");
    return p;
  }));
  out.push_back(run_gradient("temporal_refine", instances, seed + 2, [&](std::mt19937_64& rng) {
    auto cfg = small_config(base, rng);
    auto t = TemporalRefine<double>::init(cfg, rng);
    const Shape s{cfg.channels, pick(rng, 1, 4), pick(rng, 1, 4)};
    Tensord a = leaf(s, rng), m = leaf(s, rng), b = leaf(s, rng);
    Probe p{[=] { return t(a, m, b); }, {{"prev", a}, {"mid", m}, {"next", b}}};
    t.collect(p.inputs, "refine");
    return p;
  }));
  out.push_back(run_gradient("register_block", instances, seed + 3, [&](std::mt19937_64& rng) {
    auto cfg = small_config(base, rng);
    const Index frames = pick(rng, 1, 3), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
    auto blk = MambaVrBlock<double>::init(cfg, frames, rng);
    randomize_registers(blk, rng);
    Tensord x = leaf({frames * h * w, cfg.channels}, rng);
    SsmState<double> h0{leaf({cfg.inner(), cfg.d_state}, rng)};
    Probe p{[=] { return flat_pair(blk(x, frames, h, w, h0)); }, {{"tokens", x}, {"h0", h0.h}}};
    blk.collect(p.inputs, "block");
    return p;
  }));
  out.push_back(run_gradient("alignment", instances, seed + 4, [&](std::mt19937_64& rng) {
    auto cfg = small_config(base, rng);
    const Index frames = coin(rng) ? 3 : 5;
    auto m = MultiscaleAlignment<double>::init(cfg, frames, rng);
    randomize_registers(m.global, rng);
    for (auto& w : m.windows) randomize_registers(w, rng);
    const Index h = 2 * pick(rng, 1, 2), w = 2 * pick(rng, 1, 2);
    std::vector<Tensord> seq;
    Probe p;
    for (Index i = 0; i < frames; ++i) {
      seq.push_back(leaf({cfg.channels, h, w}, rng));
      p.inputs.push_back({"f" + std::to_string(i), seq.back()});
    }
    p.f = [=] { return concat<double>(m(seq), 0); };
    m.collect(p.inputs, "alignment");
    return p;
  }));
  out.push_back(run_gradient("charbonnier_loss", instances, seed + 5, [&](std::mt19937_64& rng) {
    const Index frames = pick(rng, 1, 3);
    const Shape s{3, pick(rng, 1, 4), pick(rng, 1, 4)};
    const double eps = std::uniform_real_distribution<double>(1e-3, 1e-1)(rng);
    std::vector<Tensord> pred, gt;
    Probe p;
    for (Index i = 0; i < frames; ++i) {
      pred.push_back(Tensord::uniform(s, rng, 0.0, 1.0, true));
      gt.push_back(Tensord::uniform(s, rng, 0.0, 1.0, true));
      p.inputs.push_back({"pred" + std::to_string(i), pred.back()});
      p.inputs.push_back({"gt" + std::to_string(i), gt.back()});
    }
    p.f = [=] { return charbonnier_loss<double>(pred, gt, eps); };
    return p;
  }));
  return out;
}

Result scan_equivalence(Index instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Result r;
  r.name = "scan_equivalence";
  std::mt19937_64 rng(seed);
  auto rel = [](const Buffer<double>& a, const Buffer<double>& b) {
    return (a - b).abs().maxCoeff() / std::max(1.0, a.abs().maxCoeff());
  };
  auto fail = [&](const std::string& what) {
    if (r.ok) r.detail = what;
    r.ok = false;
  };
  for (Index i = 0; i < instances; ++i) {
    const Index l = pick(rng, 1, 256), e = pick(rng, 1, 4), s = pick(rng, 1, 8);
    auto p = perturbed_params<float>(e, s, rng);
    auto x = Tensorf::randn({l, e}, rng);
    SsmState<float> h0{Tensorf::randn({e, s}, rng)};
    const auto a = selective_scan_sequential(x, p, h0), b = selective_scan_parallel(x, p, h0);
    const double err = std::max(rel(a.y.values().cast<double>(), b.y.values().cast<double>()),
                                rel(a.state.h.values().cast<double>(), b.state.h.values().cast<double>()));
    r.worst = std::max(r.worst, err);
    if (!(err < 1e-5)) fail("L=" + std::to_string(l) + " relative difference " + std::to_string(err));
    ++r.instances;
  }
  // Scanning a prefix and handing its state to the suffix reproduces the whole scan.
  for (auto algo : {ScanAlgorithm::sequential, ScanAlgorithm::parallel})
    for (Index split : {1, 40, 150}) {
      auto p = perturbed_params<double>(3, 4, rng);
      auto x = Tensord::randn({300, 3}, rng);
      SsmState<double> h0{Tensord::randn({3, 4}, rng)};
      const auto whole = selective_scan(x, p, h0, algo);
      const auto first = selective_scan(slice(x, 0, 0, split), p, h0, algo);
      const auto second = selective_scan(slice(x, 0, split, 300 - split), p, first.state, algo);
      const double err = std::max(rel(whole.y.values(), concat<double>({first.y, second.y}, 0).values()),
                                  rel(whole.state.h.values(), second.state.h.values()));
      if (!(err < 1e-6)) fail("handoff at " + std::to_string(split) + " differs by " + std::to_string(err));
    }
  r.seconds = seconds_since(t0);
  return r;
}

Result geometry(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Result r;
  r.name = "geometry";
  std::mt19937_64 rng(seed);
  auto fail = [&](const std::string& what) {
    if (r.ok) r.detail = what;
    r.ok = false;
  };
  auto bit_equal = [](const Tensorf& a, const Tensorf& b) {
    return a.shape() == b.shape() && (a.values() == b.values()).all();
  };

  for (Index h = 1; h <= 8; ++h)
    for (Index w = 1; w <= 8; ++w)
      for (const auto& o : masm_orders(h, w)) {
        ++r.instances;
        const std::string tag = std::to_string(h) + "x" + std::to_string(w) + " " + to_string(o.direction);
        std::vector<Index> sorted = o.forward;
        std::sort(sorted.begin(), sorted.end());
        std::vector<Index> ident(static_cast<std::size_t>(2 * h * w));
        std::iota(ident.begin(), ident.end(), 0);
        if (sorted != ident) fail("order " + tag + " is not a bijection");
        for (Index i = 0; i + 1 < o.size(); i += 2) {
          const Index a = o.forward[static_cast<std::size_t>(i)], b = o.forward[static_cast<std::size_t>(i + 1)];
          if (a >= h * w || b != a + h * w) fail("order " + tag + " breaks alternation at slot " + std::to_string(i));
        }
        for (Index i = 0; i < o.size(); ++i)
          if (o.inverse[static_cast<std::size_t>(o.forward[static_cast<std::size_t>(i)])] != i)
            fail("order " + tag + " has an inconsistent inverse");
      }

  for (Index len = 1; len <= 20; ++len)
    for (Index n = 0; n <= 4; ++n) {
      ++r.instances;
      const auto layout = RegisterLayout::uniform(len, n);
      auto x = Tensorf::randn({len, 3}, rng);
      auto regs = Tensorf::randn({std::max<Index>(layout.distinct_registers, 1), 3}, rng);
      if (layout.distinct_registers == 0) regs = Tensorf::zeros({0, 3});
      if (!bit_equal(remove_registers(insert_registers(x, layout, regs), layout), x))
        fail("register round trip L=" + std::to_string(len) + " n=" + std::to_string(n));
    }
  for (Index i = 0; i < 20; ++i) {
    ++r.instances;
    const Index frames = pick(rng, 1, 4), len = pick(rng, 1, 9), n = pick(rng, 1, 3);
    const auto layout = RegisterLayout::per_frame(frames, len, n);
    auto x = Tensorf::randn({frames * len, 2}, rng);
    auto regs = Tensorf::randn({layout.distinct_registers, 2}, rng);
    if (!bit_equal(remove_registers(insert_registers(x, layout, regs), layout), x))
      fail("per-frame register round trip");
  }

  for (Index i = 0; i < 20; ++i) {
    ++r.instances;
    const Index s = pick(rng, 1, 4), c = pick(rng, 1, 3), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
    auto x = Tensorf::randn({c * s * s, h, w}, rng);
    auto y = Tensorf::randn({c, h * s, w * s}, rng);
    if (!bit_equal(pixel_unshuffle(pixel_shuffle(x, s), s), x) || !bit_equal(pixel_shuffle(pixel_unshuffle(y, s), s), y))
      fail("pixel shuffle round trip at factor " + std::to_string(s));
  }

  for (Index i = 0; i < 20; ++i) {
    ++r.instances;
    const Index h = pick(rng, 1, 8), w = pick(rng, 1, 8), d = 4 * pick(rng, 1, 4);
    const auto spe = build_spe(h, w, d, coin(rng) ? FrequencyRule::scaled : FrequencyRule::floored);
    const auto sites = frame_sites(1, h, w);
    auto x = Tensord::randn({h * w, d}, rng);
    auto y = apply_spe(x, sites, spe);
    for (Index t = 0; t < h * w; ++t) {
      const double a = x.values().segment(t * d, d).matrix().norm(), b = y.values().segment(t * d, d).matrix().norm();
      r.worst = std::max(r.worst, std::abs(a - b));
      if (std::abs(a - b) > 1e-6) fail("rotary encoding changes a token norm by " + std::to_string(std::abs(a - b)));
    }
    // <R(p) q, R(p') k> depends only on p' - p.
    const auto q = Tensord::randn({1, d}, rng), k = Tensord::randn({1, d}, rng);
    const auto qk = concat<double>({q, k}, 0);
    const Index u1 = pick(rng, 0, h - 1), v1 = pick(rng, 0, w - 1), u2 = pick(rng, 0, h - 1), v2 = pick(rng, 0, w - 1);
    const Index du = pick(rng, -std::min(u1, u2), h - 1 - std::max(u1, u2));
    const Index dv = pick(rng, -std::min(v1, v2), w - 1 - std::max(v1, v2));
    auto dot = [&](Index a1, Index b1, Index a2, Index b2) {
      const auto z = apply_spe(qk, {{false, 0, a1, b1}, {false, 0, a2, b2}}, spe);
      return (z.values().head(d) * z.values().tail(d)).sum();
    };
    const double gap = std::abs(dot(u1, v1, u2, v2) - dot(u1 + du, v1 + dv, u2 + du, v2 + dv));
    if (gap > 1e-5) fail("rotary inner product depends on absolute position (" + std::to_string(gap) + ")");
  }
  r.seconds = seconds_since(t0);
  return r;
}

Result shape_contract(const ModelConfig& cfg, Index h, Index w, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Result r;
  r.name = "shape_contract s=" + std::to_string(cfg.scale) + " n=" + std::to_string(cfg.input_frames - 1) +
           " " + std::to_string(h) + "x" + std::to_string(w);
  r.instances = 1;
  try {
    const auto model = Model<float>::init(cfg, seed);
    std::mt19937_64 rng(seed);
    std::vector<Tensorf> frames;
    for (Index i = 0; i < cfg.input_frames; ++i) frames.push_back(Tensorf::uniform({3, h, w}, rng, 0.0f, 1.0f));
    NoGradGuard guard;
    const auto out = model(frames);
    if (static_cast<Index>(out.size()) != cfg.output_frames()) {
      r.ok = false;
      r.detail = "expected " + std::to_string(cfg.output_frames()) + " frames, got " + std::to_string(out.size());
    }
    const Shape want{3, cfg.scale * h, cfg.scale * w};
    for (std::size_t i = 0; i < out.size() && r.ok; ++i) {
      if (out[i].shape() != want) {
        r.ok = false;
        r.detail = "frame " + std::to_string(i) + " has shape " + stvsr::to_string(out[i].shape());
      } else if (!out[i].values().allFinite()) {
        r.ok = false;
        r.detail = "frame " + std::to_string(i) + " is not finite";
      }
    }
  } catch (const std::exception& e) {
    r.ok = false;
    r.detail = std::string("threw: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

Result init_identities(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Result r;
  r.name = "init_identities";
  std::mt19937_64 rng(seed);
  auto fail = [&](const std::string& what) {
    if (r.ok) r.detail = what;
    r.ok = false;
  };
  for (Index i = 0; i < 10; ++i) {
    ModelConfig cfg;
    cfg.channels = 8 * pick(rng, 1, 2);
    cfg.d_state = 4;
    cfg.registers = pick(rng, 1, 4);
    cfg.residual_blocks = 1;
    cfg.init = InitMode::zero;
    const Index h = 2 * pick(rng, 1, 4), w = 2 * pick(rng, 1, 4);
    const Index frames = 2 * pick(rng, 1, 3) + 1;

    auto refine = TemporalRefine<float>::init(cfg, rng);
    const Shape s{cfg.channels, h, w};
    auto prev = Tensorf::randn(s, rng), mid = Tensorf::randn(s, rng), next = Tensorf::randn(s, rng);
    const auto y = refine(prev, mid, next);
    ++r.instances;
    if (!(y.values() == mid.values()).all()) fail("refinement under zero init does not return its middle frame");

    auto align = MultiscaleAlignment<float>::init(cfg, frames, rng);
    std::vector<Tensorf> seq;
    for (Index t = 0; t < frames; ++t) seq.push_back(Tensorf::randn(s, rng));
    const auto out = align(seq);
    ++r.instances;
    for (Index t = 0; t < frames; ++t) {
      const auto skip = align.skip(seq[static_cast<std::size_t>(t)]);
      const double err = (out[static_cast<std::size_t>(t)].values() - skip.values()).abs().maxCoeff();
      r.worst = std::max(r.worst, err);
      if (err > 1e-6) fail("alignment under zero init differs from its skip path by " + std::to_string(err));
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

Result hf_analyzer(std::uint64_t seed) {
  const auto t0 = Clock::now();
  Result r;
  r.name = "hf_analyzer";
  std::mt19937_64 rng(seed);
  auto fail = [&](const std::string& what) {
    if (r.ok) r.detail = what;
    r.ok = false;
  };
  for (Index i = 0; i < 20; ++i) {
    ++r.instances;
    const Index h = pick(rng, 4, 32), w = pick(rng, 4, 32);
    const float level = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    const double flat = hf_ratio(Frame::full({3, h, w}, level));
    r.worst = std::max(r.worst, std::abs(flat));
    if (std::abs(flat) > 1e-12) fail("constant frame has ratio " + std::to_string(flat));

    const Index he = 2 * (h / 2), we = 2 * (w / 2);
    Frame board = Frame::zeros({3, he, we});
    auto& v = board.mutable_values();
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < he; ++y)
        for (Index x = 0; x < we; ++x) v((c * he + y) * we + x) = static_cast<float>((x + y) % 2);
    const double cb = hf_ratio(board);
    r.worst = std::max(r.worst, std::abs(cb - 1.0));
    if (std::abs(cb - 1.0) > 1e-6) fail("checkerboard has ratio " + std::to_string(cb));

    const Frame f = Frame::uniform({3, h, w}, rng, 0.2f, 0.6f);
    const float offset = std::uniform_real_distribution<float>(-0.2f, 0.4f)(rng);
    const Frame g(f.shape(), f.values() + offset);
    const double gap = std::abs(hf_ratio(f) - hf_ratio(g));
    r.worst = std::max(r.worst, gap);
    if (gap > 1e-6) fail("offset changes the ratio by " + std::to_string(gap));
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::string format(const Result& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %s  %4lld instances  worst %.3g  %.2fs", r.name.c_str(),
                r.ok ? "ok  " : "FAIL", static_cast<long long>(r.instances), r.worst, r.seconds);
  std::string s = buf;
  if (!r.detail.empty()) s += "  (" + r.detail + ")";
  return s;
}

}  // namespace stvsr::suites
