#include "stvsr/train.hpp"

#include "stvsr/ops.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace stvsr {

namespace {

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

Index to_index(const std::string& v) {
  std::size_t pos = 0;
  const long long x = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("");
  return x;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("");
}

void apply_key(TrainConfig& c, const std::string& key, const std::string& v) {
  ModelConfig& m = c.model;
  if (key == "batch_size") c.batch_size = to_index(v);
  else if (key == "lr_init") c.lr_init = to_double(v);
  else if (key == "lr_final") c.lr_final = to_double(v);
  else if (key == "beta1") c.beta1 = to_double(v);
  else if (key == "beta2") c.beta2 = to_double(v);
  else if (key == "eps") c.eps = to_double(v);
  else if (key == "total_steps") c.total_steps = to_index(v);
  else if (key == "crop") c.crop = to_index(v);
  else if (key == "flip_h") c.flip_h = to_bool(v);
  else if (key == "flip_v") c.flip_v = to_bool(v);
  else if (key == "rotate90") c.rotate90 = to_bool(v);
  else if (key == "charbonnier_eps") c.charbonnier_eps = to_double(v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(v));
  else if (key == "checkpoint_every") c.checkpoint_every = to_index(v);
  else if (key == "channels") m.channels = to_index(v);
  else if (key == "scale") m.scale = to_index(v);
  else if (key == "input_frames") m.input_frames = to_index(v);
  else if (key == "pyramid_levels") m.pyramid_levels = to_index(v);
  else if (key == "d_state") m.d_state = to_index(v);
  else if (key == "expand") m.expand = to_index(v);
  else if (key == "registers") m.registers = to_index(v);
  else if (key == "use_registers") m.use_registers = to_bool(v);
  else if (key == "use_spe") m.use_spe = to_bool(v);
  else if (key == "spe_rule") {
    if (v == "scaled") m.spe_rule = FrequencyRule::scaled;
    else if (v == "floored") m.spe_rule = FrequencyRule::floored;
    else throw std::invalid_argument("");
  } else if (key == "residual_blocks") m.residual_blocks = to_index(v);
  else if (key == "attention_reduction") m.attention_reduction = to_index(v);
  else if (key == "init") {
    if (v == "zero") m.init = InitMode::zero;
    else if (v == "random") m.init = InitMode::random;
    else throw std::invalid_argument("");
  } else if (key == "tie_gfm_branches") m.tie_gfm_branches = to_bool(v);
  else if (key == "scan") {
    if (v == "parallel") m.scan = ScanAlgorithm::parallel;
    else if (v == "sequential") m.scan = ScanAlgorithm::sequential;
    else throw std::invalid_argument("");
  } else throw std::out_of_range(key);
}

TrainConfig from_key_values(const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  for (const auto& [k, v] : kv) {
    try {
      apply_key(cfg, k, v);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("unknown config key '" + k + "'");
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("bad value '" + v + "' for config key '" + k + "'");
    }
  }
  cfg.validate();
  return cfg;
}

// Little-endian binary primitives.
void put_u32(std::ostream& o, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 4);
}
void put_u64(std::ostream& o, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}
void put_string(std::ostream& o, const std::string& s) {
  put_u32(o, static_cast<std::uint32_t>(s.size()));
  o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
  std::istream& in;
  std::string where;
  void read(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated checkpoint " + where);
  }
  std::uint64_t uint(int bytes) {
    unsigned char b[8];
    read(b, static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }
  std::string string() {
    const auto n = uint(4);
    if (n > (1u << 20)) throw std::runtime_error("corrupt checkpoint " + where);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
};

constexpr char kMagic[8] = {'S', 'T', 'V', 'S', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
const std::string kMomentPrefix = "adamax.m/";
const std::string kNormPrefix = "adamax.u/";

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(lr_final < lr_init) || lr_final < 0)
    throw std::invalid_argument("learning rates need 0 <= lr_final < lr_init");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("AdaMax betas must lie in [0,1)");
  if (!(eps > 0) || !(charbonnier_eps > 0)) throw std::invalid_argument("eps values must be positive");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be non-negative");
  const Index unit = model.scale * std::max<Index>(2, Index{1} << (model.pyramid_levels - 1));
  if (crop < 0 || crop % unit != 0)
    throw std::invalid_argument("crop " + std::to_string(crop) + " must be a multiple of " +
                                std::to_string(unit));
  if (crop > 0 && crop / model.scale < 8)
    throw std::invalid_argument("crop " + std::to_string(crop) + " leaves inputs below 8x8");
}

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  const ModelConfig& m = c.model;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"batch_size", std::to_string(c.batch_size)},
      {"lr_init", format_exact(c.lr_init)},
      {"lr_final", format_exact(c.lr_final)},
      {"beta1", format_exact(c.beta1)},
      {"beta2", format_exact(c.beta2)},
      {"eps", format_exact(c.eps)},
      {"total_steps", std::to_string(c.total_steps)},
      {"crop", std::to_string(c.crop)},
      {"flip_h", b(c.flip_h)},
      {"flip_v", b(c.flip_v)},
      {"rotate90", b(c.rotate90)},
      {"charbonnier_eps", format_exact(c.charbonnier_eps)},
      {"seed", std::to_string(c.seed)},
      {"checkpoint_every", std::to_string(c.checkpoint_every)},
      {"channels", std::to_string(m.channels)},
      {"scale", std::to_string(m.scale)},
      {"input_frames", std::to_string(m.input_frames)},
      {"pyramid_levels", std::to_string(m.pyramid_levels)},
      {"d_state", std::to_string(m.d_state)},
      {"expand", std::to_string(m.expand)},
      {"registers", std::to_string(m.registers)},
      {"use_registers", b(m.use_registers)},
      {"use_spe", b(m.use_spe)},
      {"spe_rule", m.spe_rule == FrequencyRule::scaled ? "scaled" : "floored"},
      {"residual_blocks", std::to_string(m.residual_blocks)},
      {"attention_reduction", std::to_string(m.attention_reduction)},
      {"init", m.init == InitMode::zero ? "zero" : "random"},
      {"tie_gfm_branches", b(m.tie_gfm_branches)},
      {"scan", m.scan == ScanAlgorithm::parallel ? "parallel" : "sequential"},
  };
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_key_values(cfg)) out += k + "=" + v + "\n";
  return out;
}

TrainConfig parse_train_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + " has no '='");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return from_key_values(kv);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

double cosine_lr(Index step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.total_steps)
    throw std::out_of_range("step " + std::to_string(step) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(phase));
}

AdaMax::AdaMax(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdaMax::step(const ParamList<float>& params, double lr) {
  std::vector<Buffer<float>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.tensor.grad());
    if (!grads.back().allFinite())
      throw std::runtime_error("non-finite gradient in parameter " + p.path);
  }
  ++t_;
  const double step_size = lr / (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto& m = m_[p.path];
    auto& u = u_[p.path];
    const Index n = p.tensor.numel();
    if (m.size() != n) m = Buffer<float>::Zero(n);
    if (u.size() != n) u = Buffer<float>::Zero(n);
    Tensorf handle = p.tensor;
    auto& theta = handle.mutable_values();
    const auto& g = grads[i];
    for (Index k = 0; k < n; ++k) {
      const double gk = g(k);
      const double mk = beta1_ * m(k) + (1.0 - beta1_) * gk;
      const double uk = std::max(beta2_ * u(k), std::abs(gk));
      m(k) = static_cast<float>(mk);
      u(k) = static_cast<float>(uk);
      theta(k) = static_cast<float>(theta(k) - step_size * mk / (uk + eps_));
    }
  }
}

void AdaMax::restore(Index t, std::map<std::string, Buffer<float>> m,
                     std::map<std::string, Buffer<float>> u) {
  t_ = t;
  m_ = std::move(m);
  u_ = std::move(u);
}

template <typename S>
Tensor<S> charbonnier_loss(const std::vector<Tensor<S>>& pred, const std::vector<Tensor<S>>& gt,
                           double eps) {
  if (pred.size() != gt.size() || pred.empty())
    throw ShapeError("charbonnier_loss: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gt.size()) + " target frames");
  Tensor<S> total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require_shape(pred[i].shape(), gt[i].shape(), "charbonnier_loss frame " + std::to_string(i));
    const Tensor<S> term = mean(sqrt(add(square(sub(pred[i], gt[i])), static_cast<S>(eps * eps))));
    total = total.defined() ? add(total, term) : term;
  }
  return mul(total, static_cast<S>(1.0 / static_cast<double>(pred.size())));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
      put_string(out, k);
      put_string(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
      put_string(out, name);
      put_u32(out, static_cast<std::uint32_t>(t.ndim()));
      for (Index d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
      for (Index i = 0; i < t.numel(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.at(i)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r{in, path.string()};
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a checkpoint");
  const auto version = r.uint(4);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  for (auto n = r.uint(4); n > 0; --n) {
    std::string k = r.string();
    ckpt.meta[k] = r.string();
  }
  for (auto n = r.uint(4); n > 0; --n) {
    std::string name = r.string();
    const auto ndim = r.uint(4);
    if (ndim > 8) throw std::runtime_error("corrupt checkpoint " + path.string());
    Shape shape;
    for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(static_cast<Index>(r.uint(8)));
    Buffer<float> v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v(i) = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    ckpt.tensors.emplace_back(std::move(name), Tensorf(shape, std::move(v)));
  }
  return ckpt;
}

TrainState init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  return {cfg, Model<float>::init(cfg.model, cfg.seed), AdaMax(cfg.beta1, cfg.beta2, cfg.eps), 0};
}

Checkpoint to_checkpoint(const TrainState& state) {
  Checkpoint ckpt;
  ckpt.meta = to_key_values(state.config);
  ckpt.meta["step"] = std::to_string(state.step);
  ckpt.meta["optimizer_steps"] = std::to_string(state.optimizer.steps());
  for (const auto& p : state.model.parameters()) ckpt.tensors.emplace_back(p.path, p.tensor.detach());
  for (const auto& [path, m] : state.optimizer.first_moment())
    ckpt.tensors.emplace_back(kMomentPrefix + path, Tensorf({m.size()}, m));
  for (const auto& [path, u] : state.optimizer.norm_accumulator())
    ckpt.tensors.emplace_back(kNormPrefix + path, Tensorf({u.size()}, u));
  return ckpt;
}

TrainState from_checkpoint(const Checkpoint& ckpt) {
  auto meta = ckpt.meta;
  auto take = [&](const std::string& key) {
    const auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("checkpoint lacks '" + key + "' metadata");
    std::string v = it->second;
    meta.erase(it);
    return v;
  };
  const Index step = std::stoll(take("step"));
  const Index opt_steps = std::stoll(take("optimizer_steps"));
  TrainState state = init_train_state(from_key_values(meta));
  state.step = step;

  std::map<std::string, const Tensorf*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  for (const auto& p : state.model.parameters()) {
    const auto it = by_name.find(p.path);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks parameter " + p.path);
    if (it->second->shape() != p.tensor.shape())
      throw ShapeError("checkpoint parameter " + p.path + " has shape " +
                       to_string(it->second->shape()) + ", model expects " + to_string(p.tensor.shape()));
    Tensorf handle = p.tensor;
    handle.mutable_values() = it->second->values();
    by_name.erase(it);
  }
  std::map<std::string, Buffer<float>> m, u;
  for (const auto& [name, t] : by_name) {
    if (name.rfind(kMomentPrefix, 0) == 0) m[name.substr(kMomentPrefix.size())] = t->values();
    else if (name.rfind(kNormPrefix, 0) == 0) u[name.substr(kNormPrefix.size())] = t->values();
    else throw std::runtime_error("checkpoint has unknown tensor " + name);
  }
  state.optimizer.restore(opt_steps, std::move(m), std::move(u));
  return state;
}

Frame flip_horizontal(const Frame& f) {
  const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Buffer<float> v(f.numel());
  for (Index k = 0; k < c * h; ++k)
    for (Index x = 0; x < w; ++x) v(k * w + x) = f.at(k * w + (w - 1 - x));
  return Frame(f.shape(), std::move(v));
}

Frame flip_vertical(const Frame& f) {
  const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Buffer<float> v(f.numel());
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y) v.segment((ch * h + y) * w, w) = f.values().segment((ch * h + h - 1 - y) * w, w);
  return Frame(f.shape(), std::move(v));
}

Frame rotate90(const Frame& f) {
  const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Buffer<float> v(f.numel());
  // out[y][x] = in[x][w-1-y]; output is w x h.
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < w; ++y)
      for (Index x = 0; x < h; ++x) v((ch * w + y) * h + x) = f.at((ch * h + x) * w + (w - 1 - y));
  return Frame({c, w, h}, std::move(v));
}

Frame crop(const Frame& f, Index top, Index left, Index size) {
  const Index c = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (top < 0 || left < 0 || top + size > h || left + size > w)
    throw ShapeError("crop " + std::to_string(size) + " at (" + std::to_string(top) + "," +
                     std::to_string(left) + ") exceeds frame " + to_string(f.shape()));
  Buffer<float> v(c * size * size);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < size; ++y)
      v.segment((ch * size + y) * size, size) = f.values().segment((ch * h + top + y) * w + left, size);
  return Frame({c, size, size}, std::move(v));
}

std::vector<Sample> draw_batch(const std::vector<ClipSeptuplet>& dataset, const TrainConfig& cfg,
                               Index step) {
  if (dataset.empty()) throw std::invalid_argument("training set is empty");
  const auto seed = cfg.seed;
  const auto ustep = static_cast<std::uint64_t>(step);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(ustep), static_cast<std::uint32_t>(ustep >> 32)};
  std::mt19937_64 rng(seq);
  const Index frames = cfg.model.output_frames();
  std::vector<Sample> batch;
  for (Index b = 0; b < cfg.batch_size; ++b) {
    const auto& clip = dataset[std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(rng)];
    if (static_cast<Index>(clip.gt.size()) < frames)
      throw std::invalid_argument("clip " + clip.id + " is shorter than " + std::to_string(frames) + " frames");
    const Index h = clip.gt[0].dim(1), w = clip.gt[0].dim(2);
    const Index size = cfg.crop;
    Index top = 0, left = 0;
    if (size > 0) {
      if (size > h || size > w)
        throw std::invalid_argument("crop " + std::to_string(size) + " exceeds clip " + clip.id);
      top = std::uniform_int_distribution<Index>(0, h - size)(rng);
      left = std::uniform_int_distribution<Index>(0, w - size)(rng);
    }
    std::bernoulli_distribution coin(0.5);
    const bool fh = coin(rng) && cfg.flip_h;
    const bool fv = coin(rng) && cfg.flip_v;
    const bool rot = coin(rng) && cfg.rotate90;
    ClipSeptuplet view;
    view.id = clip.id;
    for (Index i = 0; i < frames; ++i) {
      Frame f = clip.gt[static_cast<std::size_t>(i)];
      if (size > 0) f = crop(f, top, left, size);
      if (fh) f = flip_horizontal(f);
      if (fv) f = flip_vertical(f);
      if (rot) f = rotate90(f);
      view.gt.push_back(f);
    }
    degrade(view, cfg.model.scale, frames);
    batch.push_back({std::move(view.lr), std::move(view.gt)});
  }
  return batch;
}

std::vector<StepRecord> train_loop(TrainState& state, const std::vector<ClipSeptuplet>& dataset,
                                   const TrainOptions& options) {
  const TrainConfig& cfg = state.config;
  const Index stop = std::min(options.stop_after.value_or(cfg.total_steps), cfg.total_steps);
  const bool write = !options.out.empty();
  std::ofstream csv;
  if (write) {
    std::filesystem::create_directories(options.out);
    const auto csv_path = options.out / "loss.csv";
    const bool fresh = state.step == 0 || !std::filesystem::exists(csv_path);
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    if (fresh) csv << "step,lr,loss\n";
  }
  auto save = [&](const std::string& name) {
    save_checkpoint(options.out / name, to_checkpoint(state));
  };

  const ParamList<float> params = state.model.parameters();
  std::vector<StepRecord> records;
  while (state.step < stop) {
    const Index t = state.step;
    const double lr = cosine_lr(t, cfg);
    for (auto p : params) p.tensor.zero_grad();
    double loss_sum = 0.0;
    const auto batch = draw_batch(dataset, cfg, t);
    const float weight = 1.0f / static_cast<float>(batch.size());
    for (const auto& sample : batch) {
      std::vector<Tensorf> targets(sample.targets.begin(), sample.targets.end());
      Tensorf loss;
      try {
        loss = charbonnier_loss(state.model(sample.inputs), targets, cfg.charbonnier_eps);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("non-finite values at step " + std::to_string(t) + ": " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value))
        throw std::runtime_error("non-finite loss at step " + std::to_string(t));
      loss_sum += value;
      backward(mul(loss, weight));
    }
    state.optimizer.step(params, lr);
    ++state.step;
    const StepRecord rec{t, lr, loss_sum / static_cast<double>(batch.size())};
    records.push_back(rec);
    if (write) {
      char line[128];
      std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(rec.step), rec.lr, rec.loss);
      csv << line << std::flush;
      if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)
        save("ckpt_" + std::to_string(state.step) + ".bin");
    }
    if (options.on_step && !options.on_step(rec, state)) break;
  }
  if (write) save("last.bin");
  return records;
}

std::vector<Frame> infer(const Model<float>& model, const std::vector<Frame>& inputs) {
  NoGradGuard guard;
  std::vector<Frame> out;
  for (const auto& f : model(inputs)) out.push_back(Frame(f.shape(), f.values().cwiseMax(0.0f).cwiseMin(1.0f)));
  return out;
}

template Tensor<float> charbonnier_loss(const std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, double);
template Tensor<double> charbonnier_loss(const std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&, double);

}  // namespace stvsr
