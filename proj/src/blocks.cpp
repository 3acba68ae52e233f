#include "stvsr/blocks.hpp"

#include <stdexcept>

namespace stvsr {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (channels < 1) fail("channels must be positive");
  if (use_spe && channels % 4 != 0) fail("spatial encoding needs channels divisible by 4");
  if (scale != 2 && scale != 4) fail("scale must be 2 or 4");
  if (input_frames < 2) fail("need at least 2 input frames");
  if (pyramid_levels < 1) fail("pyramid_levels must be >= 1");
  if (d_state < 1 || expand < 1) fail("d_state and expand must be >= 1");
  if (registers < 0) fail("registers must be >= 0");
  if (residual_blocks < 0) fail("residual_blocks must be >= 0");
  if (attention_reduction < 1) fail("attention_reduction must be >= 1");
}

namespace {

template <typename S>
void require_same(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
}

template <typename S>
Tensor<S> gate(const Tensor<S>& xz, Index e, Tensor<S>* scan_input) {
  *scan_input = silu(slice(xz, 1, 0, e));
  return silu(slice(xz, 1, e, e));
}

}  // namespace

template <typename S>
FeatureExtractor<S> FeatureExtractor<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  FeatureExtractor f;
  f.head = Conv2d<S>::init(3, cfg.channels, 3, rng);
  for (Index i = 0; i < cfg.residual_blocks; ++i)
    f.body.push_back(ResidualBlock<S>::init(cfg.channels, rng, cfg.init));
  return f;
}

template <typename S>
Tensor<S> FeatureExtractor<S>::operator()(const Tensor<S>& frame) const {
  if (frame.ndim() != 3 || frame.dim(0) != 3 || frame.dim(1) < 8 || frame.dim(2) < 8)
    throw ShapeError("feature extractor expects [3,H,W] with H,W >= 8, got " +
                     to_string(frame.shape()));
  Tensor<S> x = head(frame);
  for (const auto& block : body) x = block(x);
  return x;
}

template <typename S>
void FeatureExtractor<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  head.collect(out, join_path(prefix, "head"));
  for (std::size_t i = 0; i < body.size(); ++i)
    body[i].collect(out, join_path(prefix, "res" + std::to_string(i)));
}

template <typename S>
SelectiveMixer<S> SelectiveMixer<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index c = cfg.channels, e = cfg.inner();
  SelectiveMixer m;
  m.in_proj = Linear<S>::init(c, 2 * e, rng);
  m.forward = SsmParams<S>::init(e, cfg.d_state, rng);
  m.backward = SsmParams<S>::init(e, cfg.d_state, rng);
  m.out_proj = Linear<S>::init(e, c, rng, cfg.init);
  m.scan = cfg.scan;
  return m;
}

template <typename S>
ScanResult<S> SelectiveMixer<S>::operator()(const Tensor<S>& tokens,
                                            const std::optional<SsmState<S>>& h0) const {
  const Index e = forward.d_model;
  Tensor<S> u;
  const Tensor<S> z = gate(in_proj(tokens), e, &u);
  const SsmState<S> start = h0 ? *h0 : SsmState<S>::zeros(e, forward.d_state);
  ScanResult<S> r = bidirectional_scan(u, forward, backward, start, scan);
  return {out_proj(mul(r.y, z)), r.state};
}

template <typename S>
void SelectiveMixer<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  in_proj.collect(out, join_path(prefix, "in_proj"));
  forward.collect(out, join_path(prefix, "ssm_fwd"));
  backward.collect(out, join_path(prefix, "ssm_bwd"));
  out_proj.collect(out, join_path(prefix, "out_proj"));
}

template <typename S>
MambaVrBlock<S> MambaVrBlock<S>::init(const ModelConfig& cfg, Index max_frames,
                                      std::mt19937_64& rng) {
  MambaVrBlock b;
  b.norm = RmsNorm<S>::init(cfg.channels);
  b.mixer = SelectiveMixer<S>::init(cfg, rng);
  b.use_registers = cfg.use_registers;
  b.use_spe = cfg.use_spe;
  b.spe_rule = cfg.spe_rule;
  if (b.use_registers) b.registers = zero_param<S>({cfg.registers, cfg.channels});
  b.tpe = TemporalPositionEmbedding<S>::init(max_frames, cfg.channels, rng);
  return b;
}

template <typename S>
ScanResult<S> MambaVrBlock<S>::operator()(const Tensor<S>& tokens, Index frames, Index h, Index w,
                                          const std::optional<SsmState<S>>& h0) const {
  const Index c = norm.gain.dim(0);
  require_shape(tokens.shape(), {frames * h * w, c}, "register block tokens");
  if (frames > tpe.table.dim(0))
    throw ShapeError("register block: " + std::to_string(frames) +
                     " frames exceed the temporal table of " + std::to_string(tpe.table.dim(0)));
  const Index n = use_registers ? registers.dim(0) : 0;
  const auto layout = RegisterLayout::per_frame(frames, h * w, n);
  const auto sites = frame_sites(frames, h, w, layout);
  const Tensor<S> x = n ? insert_registers(tokens, layout, registers) : tokens;
  const Tensor<S> x0 = tpe.apply(x, sites);
  Tensor<S> mixed_in = norm(x0);
  if (use_spe) mixed_in = apply_spe(mixed_in, sites, build_spe(h, w, c, spe_rule));
  ScanResult<S> r = mixer(mixed_in, h0);
  return {remove_registers(add(x0, r.y), layout), r.state};
}

template <typename S>
void MambaVrBlock<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  norm.collect(out, join_path(prefix, "norm"));
  mixer.collect(out, join_path(prefix, "mixer"));
  if (use_registers && registers.numel() > 0)
    out.push_back({join_path(prefix, "registers"), registers});
  tpe.collect(out, join_path(prefix, "tpe"));
}

template <typename S>
VimBlock<S> VimBlock<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  return {RmsNorm<S>::init(cfg.channels), SelectiveMixer<S>::init(cfg, rng)};
}

template <typename S>
ScanResult<S> VimBlock<S>::operator()(const Tensor<S>& tokens,
                                      const std::optional<SsmState<S>>& h0) const {
  ScanResult<S> r = mixer(norm(tokens), h0);
  return {add(tokens, r.y), r.state};
}

template <typename S>
void VimBlock<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  norm.collect(out, join_path(prefix, "norm"));
  mixer.collect(out, join_path(prefix, "mixer"));
}

template <typename S>
MasmMixer<S> MasmMixer<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index c = cfg.channels, e = cfg.inner();
  MasmMixer m;
  m.in_proj = Linear<S>::init(c, 2 * e, rng);
  for (auto& d : m.directions) d = SsmParams<S>::init(e, cfg.d_state, rng);
  m.offset = Linear<S>::init(2 * e, c, rng, cfg.init);
  m.scan = cfg.scan;
  return m;
}

template <typename S>
Tensor<S> MasmMixer<S>::operator()(const Tensor<S>& prev, const Tensor<S>& next) const {
  require_same(prev, next, "offset estimator");
  const Index h = prev.dim(1), w = prev.dim(2), hw = h * w;
  const Index e = directions[0].d_model;
  const Tensor<S> tokens = concat<S>({to_tokens(prev), to_tokens(next)}, 0);
  Tensor<S> u;
  const Tensor<S> z = gate(in_proj(tokens), e, &u);
  const auto orders = masm_orders(h, w);
  Tensor<S> acc;
  for (std::size_t k = 0; k < orders.size(); ++k) {
    const std::span<const Index> order(orders[k].forward);
    const Tensor<S> seq = gather_permute(u, order);
    const auto r = selective_scan(seq, directions[k],
                                  SsmState<S>::zeros(e, directions[k].d_state), scan);
    const Tensor<S> back = scatter_permute(r.y, order);
    acc = acc.defined() ? add(acc, back) : back;
  }
  const Tensor<S> g = mul(acc, z);
  const Tensor<S> paired = concat<S>({slice(g, 0, 0, hw), slice(g, 0, hw, hw)}, 1);
  return from_tokens(offset(paired), h, w);
}

template <typename S>
void MasmMixer<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  in_proj.collect(out, join_path(prefix, "in_proj"));
  static const char* names[] = {"ssm_row_fwd", "ssm_row_bwd", "ssm_col_fwd", "ssm_col_bwd"};
  for (std::size_t k = 0; k < directions.size(); ++k)
    directions[k].collect(out, join_path(prefix, names[k]));
  offset.collect(out, join_path(prefix, "offset"));
}

template <typename S>
FusionPyramid<S> FusionPyramid<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index c = cfg.channels;
  FusionPyramid p;
  for (Index k = 0; k < cfg.pyramid_levels; ++k) {
    p.offsets.push_back(MasmMixer<S>::init(cfg, rng));
    p.fuse.push_back(Conv2d<S>::init(2 * c, c, 3, rng));
    if (k + 1 < cfg.pyramid_levels) p.merge.push_back(Conv2d<S>::init(2 * c, c, 3, rng));
  }
  return p;
}

template <typename S>
std::vector<Tensor<S>> FusionPyramid<S>::level_predictions(const Tensor<S>& prev,
                                                           const Tensor<S>& next) const {
  require_same(prev, next, "fusion pyramid");
  const Index step = Index{1} << (levels() - 1);
  if (prev.dim(1) % step != 0 || prev.dim(2) % step != 0)
    throw ShapeError("fusion pyramid: " + to_string(prev.shape()) + " extents not divisible by " +
                     std::to_string(step) + " for " + std::to_string(levels()) + " levels");
  std::vector<Tensor<S>> out;
  Tensor<S> a = prev, b = next;
  for (Index k = 0; k < levels(); ++k) {
    if (k > 0) {
      a = avg_pool2(a);
      b = avg_pool2(b);
    }
    const auto ku = static_cast<std::size_t>(k);
    const Tensor<S> off = offsets[ku](a, b);
    out.push_back(leaky_relu(fuse[ku](concat<S>({off, b}, 0)), S(0.1)));
  }
  return out;
}

template <typename S>
Tensor<S> FusionPyramid<S>::operator()(const Tensor<S>& prev, const Tensor<S>& next) const {
  const auto preds = level_predictions(prev, next);
  Tensor<S> g = preds.back();
  for (Index k = levels() - 2; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    g = leaky_relu(merge[ku](concat<S>({upsample_bilinear2(g), preds[ku]}, 0)), S(0.1));
  }
  return g;
}

template <typename S>
void FusionPyramid<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const std::string level = join_path(prefix, "level" + std::to_string(k));
    offsets[k].collect(out, join_path(level, "masm"));
    fuse[k].collect(out, join_path(level, "fuse"));
    if (k < merge.size()) merge[k].collect(out, join_path(level, "merge"));
  }
}

template <typename S>
GlobalFusion<S> GlobalFusion<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  GlobalFusion g;
  g.tied = cfg.tie_gfm_branches;
  g.forward = FusionPyramid<S>::init(cfg, rng);
  if (!g.tied) g.backward = FusionPyramid<S>::init(cfg, rng);
  g.blend = Conv2d<S>::init(2 * cfg.channels, cfg.channels, 1, rng);
  return g;
}

template <typename S>
Tensor<S> GlobalFusion<S>::operator()(const Tensor<S>& prev, const Tensor<S>& next) const {
  const Tensor<S> fwd = forward(prev, next);
  const Tensor<S> bwd = backward_branch()(next, prev);
  return blend(concat<S>({fwd, bwd}, 0));
}

template <typename S>
void GlobalFusion<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  forward.collect(out, join_path(prefix, "fwd"));
  if (!tied) backward.collect(out, join_path(prefix, "bwd"));
  blend.collect(out, join_path(prefix, "blend"));
}

template <typename S>
TemporalRefine<S> TemporalRefine<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  const Index c = cfg.channels;
  TemporalRefine t;
  t.motion = Conv3d<S>::init(c, c, {3, 3, 3}, {{1, 1, 1}, {1, 1, 1}}, rng);
  t.blend1 = Conv2d<S>::init(6 * c, c, 3, rng);
  t.blend2 = Conv2d<S>::init(c, c, 3, rng, cfg.init);
  return t;
}

template <typename S>
Tensor<S> TemporalRefine<S>::operator()(const Tensor<S>& prev, const Tensor<S>& mid,
                                        const Tensor<S>& next) const {
  require_same(prev, mid, "temporal refine");
  require_same(mid, next, "temporal refine");
  const Index c = mid.dim(0), h = mid.dim(1), w = mid.dim(2);
  const Tensor<S> motion_map = relu(motion(stack_time<S>({prev, mid, next})));
  const Tensor<S> cat = concat<S>({reshape(motion_map, {3 * c, h, w}), prev, mid, next}, 0);
  return add(mid, blend2(relu(blend1(cat))));
}

template <typename S>
void TemporalRefine<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  motion.collect(out, join_path(prefix, "motion3d"));
  blend1.collect(out, join_path(prefix, "blend1"));
  blend2.collect(out, join_path(prefix, "blend2"));
}

Index short_term_window(Index frames, Index i) {
  if (frames < 3 || frames % 2 == 0)
    throw std::invalid_argument("short-term windows need an odd frame count >= 3, got " +
                                std::to_string(frames));
  if (i < 0 || i >= frames) throw std::out_of_range("frame index out of range");
  const Index count = (frames - 1) / 2;
  Index best = 0;
  for (Index j = 1; j < count; ++j)
    if (std::abs(i - (2 * j + 1)) <= std::abs(i - (2 * best + 1))) best = j;
  return best;
}

template <typename S>
MultiscaleAlignment<S> MultiscaleAlignment<S>::init(const ModelConfig& cfg, Index frames,
                                                    std::mt19937_64& rng) {
  const Index c = cfg.channels;
  MultiscaleAlignment m;
  m.patch_embed = Conv3d<S>::init(c, c, {1, 2, 2}, {{1, 2, 2}, {0, 0, 0}}, rng);
  m.global = MambaVrBlock<S>::init(cfg, frames, rng);
  for (Index j = 0; j < (frames - 1) / 2; ++j)
    m.windows.push_back(MambaVrBlock<S>::init(cfg, 3, rng));
  m.guided = VimBlock<S>::init(cfg, rng);
  m.attention = ChannelAttention<S>::init(3 * c, cfg.attention_reduction, rng);
  m.project = Conv2d<S>::init(3 * c, c, 1, rng, cfg.init);
  m.skip = Conv2d<S>::init(c, c, 3, rng);
  return m;
}

template <typename S>
std::vector<Tensor<S>> MultiscaleAlignment<S>::operator()(
    const std::vector<Tensor<S>>& frames) const {
  const auto count = static_cast<Index>(frames.size());
  if (count < 3) throw ShapeError("alignment needs at least 3 frames");
  if (count != 2 * static_cast<Index>(windows.size()) + 1)
    throw ShapeError("alignment built for " + std::to_string(2 * windows.size() + 1) +
                     " frames, got " + std::to_string(count));
  for (const auto& f : frames) require_same(f, frames[0], "alignment frames");
  const Index c = frames[0].dim(0), H = frames[0].dim(1), W = frames[0].dim(2);
  if (H % 2 || W % 2) throw ShapeError("alignment needs even extents, got " + to_string(frames[0].shape()));
  const Index h = H / 2, w = W / 2;

  // Global path over half-resolution patches of the whole sequence.
  const Tensor<S> patches = patch_embed(stack_time(frames));  // [C,T,h,w]
  const auto g = global(transpose(reshape(patches, {c, -1})), count, h, w);
  const Tensor<S> global_maps = reshape(transpose(g.y), {c, count, h, w});

  // Short-term windows at full resolution.
  std::vector<Tensor<S>> window_out;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const std::vector<Tensor<S>> trio(frames.begin() + 2 * j, frames.begin() + 2 * j + 3);
    const Tensor<S> tokens = transpose(reshape(stack_time(trio), {c, -1}));
    window_out.push_back(windows[j](tokens, 3, H, W).y);
  }

  std::vector<Tensor<S>> out;
  for (Index i = 0; i < count; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const Index j = short_term_window(count, i);
    const Tensor<S> eg = upsample_bilinear2(time_slice(global_maps, i));
    const Tensor<S> el = from_tokens(
        slice(window_out[static_cast<std::size_t>(j)], 0, (i - 2 * j) * H * W, H * W), H, W);
    // Raster order is the identity permutation, so tokens need no reordering.
    const Tensor<S> li = from_tokens(guided(to_tokens(frames[iu]), g.state).y, H, W);
    const Tensor<S> fused = project(attention(concat<S>({eg, el, li}, 0)));
    out.push_back(add(skip(frames[iu]), fused));
  }
  return out;
}

template <typename S>
void MultiscaleAlignment<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  patch_embed.collect(out, join_path(prefix, "patch_embed"));
  global.collect(out, join_path(prefix, "global"));
  for (std::size_t j = 0; j < windows.size(); ++j)
    windows[j].collect(out, join_path(prefix, "window" + std::to_string(j)));
  guided.collect(out, join_path(prefix, "guided"));
  attention.collect(out, join_path(prefix, "attention"));
  project.collect(out, join_path(prefix, "project"));
  skip.collect(out, join_path(prefix, "skip"));
}

template <typename S>
Reconstructor<S> Reconstructor<S>::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.scale != 2 && cfg.scale != 4)
    throw std::invalid_argument("reconstruction scale must be 2 or 4");
  const Index c = cfg.channels;
  Reconstructor r;
  for (Index i = 0; i < cfg.residual_blocks; ++i)
    r.body.push_back(ResidualBlock<S>::init(c, rng, cfg.init));
  r.expand = Conv2d<S>::init(c, c * cfg.scale * cfg.scale, 3, rng);
  r.to_rgb = Conv2d<S>::init(c, 3, 3, rng);
  r.scale = cfg.scale;
  return r;
}

template <typename S>
Tensor<S> Reconstructor<S>::operator()(const Tensor<S>& features) const {
  Tensor<S> x = features;
  for (const auto& block : body) x = block(x);
  return to_rgb(pixel_shuffle(expand(x), scale));
}

template <typename S>
void Reconstructor<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < body.size(); ++i)
    body[i].collect(out, join_path(prefix, "res" + std::to_string(i)));
  expand.collect(out, join_path(prefix, "expand"));
  to_rgb.collect(out, join_path(prefix, "to_rgb"));
}

#define STVSR_INSTANTIATE(S)               \
  template struct FeatureExtractor<S>;     \
  template struct SelectiveMixer<S>;       \
  template struct MambaVrBlock<S>;         \
  template struct VimBlock<S>;             \
  template struct MasmMixer<S>;            \
  template struct FusionPyramid<S>;        \
  template struct GlobalFusion<S>;         \
  template struct TemporalRefine<S>;       \
  template struct MultiscaleAlignment<S>;  \
  template struct Reconstructor<S>;

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
