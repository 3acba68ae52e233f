// Command-line front end: data preparation, training, inference, evaluation
// and the property suites.

#include "stvsr/data.hpp"
#include "stvsr/eval.hpp"
#include "stvsr/suites.hpp"
#include "stvsr/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace stvsr;

namespace {

struct PrepareArgs {
  std::string source, out;
  Index test_every = 10;
};

struct SynthArgs {
  std::string out;
  Index videos = 2, frames = 100, height = 32, width = 32;
  std::uint64_t seed = 1;
  std::vector<Index> black;
};

struct HfArgs {
  std::string in, out;
  double rho = 0.125;
};

struct TrainArgs {
  std::string config, data, out, resume, manifest;
  Index log_every = 100;
};

struct InferArgs {
  std::string ckpt, in, out, manifest;
  bool from_gt = false;
};

struct EvalArgs {
  std::string pred, gt, manifest, out, tiers;
  bool luma = false;
  Index frames = kClipLength;
};

struct GradArgs {
  Index instances = 20;
  std::uint64_t seed = 1;
  std::string variant = "all";
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int run_prepare(const PrepareArgs& a) {
  PrepareOptions o;
  o.source = a.source;
  o.output = a.out;
  o.test_every = a.test_every;
  const auto s = prepare(o);
  std::printf("%lld videos, %lld clips (%lld train, %lld test) written to %s\n", static_cast<long long>(s.videos),
              static_cast<long long>(s.clips), static_cast<long long>(s.train), static_cast<long long>(s.test),
              a.out.c_str());
  return 0;
}

int run_synth(const SynthArgs& a) {
  write_synthetic_corpus(a.out, a.videos, a.frames, a.height, a.width, a.seed, a.black);
  std::printf("wrote %lld videos of %lld frames to %s\n", static_cast<long long>(a.videos),
              static_cast<long long>(a.frames), a.out.c_str());
  return 0;
}

int run_analyze(const HfArgs& a) {
  const auto report = analyze_hf(a.in, a.rho);
  if (!a.out.empty()) write_hf_csv(a.out, report);
  std::printf("%zu frames, mean high-frequency ratio %.6f\n", report.frames.size(), report.mean());
  return 0;
}

int run_train(const TrainArgs& a) {
  TrainState state = [&] {
    if (a.resume.empty()) {
      if (a.config.empty()) throw std::invalid_argument("train needs --config unless --resume is given");
      return init_train_state(load_train_config(a.config));
    }
    TrainState resumed = from_checkpoint(load_checkpoint(a.resume));
    if (!a.config.empty() && to_text(load_train_config(a.config)) != to_text(resumed.config))
      throw std::invalid_argument("--config differs from the configuration stored in " + a.resume);
    return resumed;
  }();
  const fs::path manifest = a.manifest.empty() ? fs::path(a.data) / "sep_trainlist.txt" : fs::path(a.manifest);
  const auto dataset = load_clips(a.data, manifest);
  if (dataset.empty()) throw std::invalid_argument("no training clips listed in " + manifest.string());
  std::fprintf(stderr, "training on %zu clips from step %lld to %lld\n", dataset.size(),
               static_cast<long long>(state.step), static_cast<long long>(state.config.total_steps));
  TrainOptions o;
  o.out = a.out;
  o.on_step = [&](const StepRecord& r, const TrainState&) {
    if (a.log_every > 0 && (r.step + 1) % a.log_every == 0)
      std::fprintf(stderr, "step %lld  lr %.3g  loss %.6f\n", static_cast<long long>(r.step + 1), r.lr, r.loss);
    return true;
  };
  train_loop(state, dataset, o);
  std::printf("finished at step %lld; checkpoint %s\n", static_cast<long long>(state.step),
              (fs::path(a.out) / "last.bin").string().c_str());
  return 0;
}

fs::path clip_dir(const fs::path& root, const std::string& id) {
  const fs::path nested = root / "sequences" / id;
  return fs::is_directory(nested) ? nested : root / id;
}

void write_frames(const fs::path& dir, const std::vector<Frame>& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) write_png(dir / ("im" + std::to_string(i + 1) + ".png"), frames[i]);
}

std::vector<Frame> read_frames(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& p : list_frames(dir)) frames.push_back(read_png(p));
  if (frames.empty()) throw std::invalid_argument("no frames in " + dir.string());
  return frames;
}

/// LR inputs from ground truth: bicubic downscales of the 0-based even frames.
std::vector<Frame> inputs_from_gt(const std::vector<Frame>& gt, const ModelConfig& cfg) {
  if (static_cast<Index>(gt.size()) < cfg.output_frames())
    throw std::invalid_argument("need " + std::to_string(cfg.output_frames()) + " ground-truth frames, found " +
                                std::to_string(gt.size()));
  std::vector<Frame> lr;
  for (Index i : input_frame_indices(cfg.output_frames()))
    lr.push_back(bicubic_downscale(gt[static_cast<std::size_t>(i)], cfg.scale));
  return lr;
}

int run_infer(const InferArgs& a) {
  const TrainState state = from_checkpoint(load_checkpoint(a.ckpt));
  const ModelConfig& cfg = state.model.config;
  auto run_clip = [&](const fs::path& in, const fs::path& out, bool from_gt) {
    auto frames = read_frames(in);
    if (from_gt) frames = inputs_from_gt(frames, cfg);
    write_frames(out, infer(state.model, frames));
  };
  if (a.manifest.empty()) {
    run_clip(a.in, a.out, a.from_gt);
    std::printf("wrote %lld frames to %s\n", static_cast<long long>(cfg.output_frames()), a.out.c_str());
    return 0;
  }
  const auto ids = read_manifest(a.manifest);
  for (const auto& id : ids) run_clip(clip_dir(a.in, id), fs::path(a.out) / id, true);
  std::printf("wrote %zu clips to %s\n", ids.size(), a.out.c_str());
  return 0;
}

int run_evaluate(const EvalArgs& a) {
  EvalOptions o;
  o.pred = a.pred;
  o.gt = a.gt;
  o.manifest = a.manifest;
  if (!a.tiers.empty()) o.tiers = fs::path(a.tiers);
  o.luma_psnr = a.luma;
  o.frames = a.frames;
  const auto report = evaluate(o);
  fs::path stem(a.out);
  if (stem.extension() == ".csv" || stem.extension() == ".json") stem.replace_extension();
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  write_csv(stem.string() + ".csv", report);
  write_json(stem.string() + ".json", report);
  write_plot_data(stem.string() + "_plot.csv", report);
  Index errors = 0;
  for (const auto& c : report.clips) errors += c.error.empty() ? 0 : 1;
  std::printf("%lld clips scored, %lld errors; AVG %.4f dB / %.4f, VFI %.4f dB / %.4f\n",
              static_cast<long long>(report.overall.clips), static_cast<long long>(errors), report.overall.psnr_avg,
              report.overall.ssim_avg, report.overall.psnr_vfi, report.overall.ssim_vfi);
  return 0;
}

int run_gradcheck(const GradArgs& a) {
  struct Variant {
    std::string name;
    bool registers, spe;
  };
  const std::vector<Variant> all{{"plain", false, false}, {"registers", true, false}, {"rotary", false, true},
                                 {"full", true, true}};
  std::vector<Variant> variants;
  for (const auto& v : all)
    if (a.variant == "all" || a.variant == v.name) variants.push_back(v);
  if (variants.empty()) throw std::invalid_argument("unknown variant '" + a.variant + "'");

  bool ok = true;
  auto report = [&](const suites::Result& r) {
    std::printf("%s\n", suites::format(r).c_str());
    std::fflush(stdout);
    ok = ok && r.ok;
  };
  for (const auto& r : suites::primitive_gradients(a.instances, a.seed)) report(r);
  for (const auto& v : variants) {
    ModelConfig base;
    base.use_registers = v.registers;
    base.use_spe = v.spe;
    std::printf("-- blocks, %s variant\n", v.name.c_str());
    for (auto r : suites::block_gradients(base, a.instances, a.seed + 100)) report(r);
  }
  report(suites::scan_equivalence(100, a.seed + 200));
  report(suites::geometry(a.seed + 300));
  report(suites::init_identities(a.seed + 400));
  report(suites::hf_analyzer(a.seed + 500));
  std::printf("%s\n", ok ? "all suites passed" : "some suites FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time video super-resolution: data preparation, training, inference and evaluation"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Cut a frame corpus into 7-frame clips with train/test lists and tiers");
  p->add_option("--source", prep.source, "Directory with one sub-directory of numbered PNG frames per video")
      ->required()
      ->check(CLI::ExistingDirectory);
  p->add_option("--out", prep.out, "Output root (sequences/, sep_trainlist.txt, sep_testlist.txt, tiers.txt)")
      ->required();
  p->add_option("--test-every", prep.test_every, "Every k-th clip goes to the test list")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  SynthArgs sy;
  auto* sc = app.add_subcommand("synth", "Write a synthetic corpus of moving-square videos");
  sc->add_option("--out", sy.out, "Output directory (one sub-directory per video)")->required();
  sc->add_option("--videos", sy.videos, "Number of videos")->capture_default_str()->check(CLI::PositiveNumber);
  sc->add_option("--frames", sy.frames, "Frames per video")->capture_default_str()->check(CLI::PositiveNumber);
  sc->add_option("--height", sy.height, "Frame height")->capture_default_str()->check(CLI::Range(4, 4096));
  sc->add_option("--width", sy.width, "Frame width")->capture_default_str()->check(CLI::Range(4, 4096));
  sc->add_option("--seed", sy.seed, "Seed")->capture_default_str();
  sc->add_option("--black", sy.black, "Global frame indices to blank out");

  HfArgs hf;
  auto* h = app.add_subcommand("analyze-hf", "High-frequency energy ratio of every frame in a directory");
  h->add_option("--in", hf.in, "Directory of numbered PNG frames")->required()->check(CLI::ExistingDirectory);
  h->add_option("--out", hf.out, "CSV file (frame,ratio)");
  h->add_option("--rho", hf.rho, "Low-pass radius as a fraction of min(H, W)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train from a prepared dataset");
  t->add_option("--config", tr.config, "key=value configuration file")->check(CLI::ExistingFile);
  t->add_option("--data", tr.data, "Prepared dataset root")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr.out, "Directory for loss.csv and checkpoints")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  t->add_option("--manifest", tr.manifest, "Clip list (default <data>/sep_trainlist.txt)");
  t->add_option("--log-every", tr.log_every, "Progress line interval in steps (0 = quiet)")->capture_default_str();

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Run a checkpoint on low-resolution frames");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  i->add_option("--in", inf.in, "Clip directory of n+1 LR frames (or a dataset root with --manifest)")
      ->required()
      ->check(CLI::ExistingDirectory);
  i->add_option("--out", inf.out, "Output directory for im1..im(2n+1).png")->required();
  i->add_flag("--from-gt", inf.from_gt, "--in holds 2n+1 ground-truth frames; degrade them first");
  i->add_option("--manifest", inf.manifest, "Infer every listed clip of a dataset root, degrading from ground truth")
      ->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score predicted clips against ground truth");
  e->add_option("--pred", ev.pred, "Predicted clips root (<pred>/<clip>/imK.png)")
      ->required()
      ->check(CLI::ExistingDirectory);
  e->add_option("--gt", ev.gt, "Ground-truth root")->required()->check(CLI::ExistingDirectory);
  e->add_option("--manifest", ev.manifest, "Clip list")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Report path; writes <stem>.csv, <stem>.json and <stem>_plot.csv")->required();
  e->add_option("--tiers", ev.tiers, "Tier file (default <gt>/tiers.txt when present)")->check(CLI::ExistingFile);
  e->add_flag("--luma-psnr", ev.luma, "PSNR on BT.601 luma instead of RGB");
  e->add_option("--frames", ev.frames, "Frames per clip")->capture_default_str()->check(CLI::PositiveNumber);

  GradArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Run the gradient, scan, geometry and identity property suites");
  g->add_option("--instances", gc.instances, "Random instances per gradient check")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  g->add_option("--seed", gc.seed, "Base seed")->capture_default_str();
  g->add_option("--variant", gc.variant, "Block variant: plain, registers, rotary, full or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"all", "plain", "registers", "rotary", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (*p) return run_prepare(prep);
    if (*sc) return run_synth(sy);
    if (*h) return run_analyze(hf);
    if (*t) return run_train(tr);
    if (*i) return run_infer(inf);
    if (*e) return run_evaluate(ev);
    if (*g) return run_gradcheck(gc);
  } catch (const std::exception& ex) {
    std::cerr << "stvsr: error: " << one_line(ex.what()) << "\n";
    return 1;
  }
  return 1;
}
