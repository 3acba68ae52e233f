#pragma once

#include "stvsr/data.hpp"
#include "stvsr/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stvsr {

struct TrainConfig {
  ModelConfig model;
  Index batch_size = 8;
  double lr_init = 0.01;
  double lr_final = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Index total_steps = 300000;
  Index crop = 128;  ///< square ground-truth crop side; 0 trains on whole frames
  bool flip_h = true;
  bool flip_v = true;
  bool rotate90 = true;
  double charbonnier_eps = 1e-3;
  std::uint64_t seed = 0;
  Index checkpoint_every = 5000;  ///< 0 writes only the final checkpoint

  /// Throws std::invalid_argument on an unusable combination.
  void validate() const;
};

/// Flat `key=value` lines; `#` starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Every key, one per line, in a fixed order; parses back to the same config.
std::string to_text(const TrainConfig& cfg);
std::map<std::string, std::string> to_key_values(const TrainConfig& cfg);

/// Cosine annealing from lr_init at step 0 to lr_final at total_steps.
double cosine_lr(Index step, const TrainConfig& cfg);

/// AdaMax with bias-corrected first moment; state keyed by parameter path.
class AdaMax {
 public:
  AdaMax(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One update from the accumulated gradients of `params`. A non-finite
  /// gradient throws std::runtime_error naming the parameter, before any write.
  void step(const ParamList<float>& params, double lr);

  Index steps() const { return t_; }
  const std::map<std::string, Buffer<float>>& first_moment() const { return m_; }
  const std::map<std::string, Buffer<float>>& norm_accumulator() const { return u_; }
  void restore(Index t, std::map<std::string, Buffer<float>> m,
               std::map<std::string, Buffer<float>> u);

 private:
  double beta1_, beta2_, eps_;
  Index t_ = 0;
  std::map<std::string, Buffer<float>> m_, u_;
};

/// Mean over frames and pixels of sqrt((p - g)^2 + eps^2).
template <typename S>
Tensor<S> charbonnier_loss(const std::vector<Tensor<S>>& pred, const std::vector<Tensor<S>>& gt,
                           double eps = 1e-3);

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensorf>> tensors;
};

/// Binary layout: "STVSRCKP", u32 version, u32 meta count, (string key,
/// string value)*, u32 tensor count, (string name, u32 ndim, u64 dims[ndim],
/// f32 values)*. Strings are u32 length + bytes; all integers little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainState {
  TrainConfig config;
  Model<float> model;
  AdaMax optimizer;
  Index step = 0;  ///< completed updates
};

TrainState init_train_state(const TrainConfig& cfg);
Checkpoint to_checkpoint(const TrainState& state);
/// Rebuilds model and optimizer; the config comes from the checkpoint metadata.
TrainState from_checkpoint(const Checkpoint& ckpt);

/// One training example after crop, augmentation and degradation.
struct Sample {
  std::vector<Frame> inputs;
  std::vector<Frame> targets;
};

/// The batch drawn at `step`: a pure function of (seed, step) and the dataset.
std::vector<Sample> draw_batch(const std::vector<ClipSeptuplet>& dataset, const TrainConfig& cfg,
                               Index step);

Frame flip_horizontal(const Frame& f);
Frame flip_vertical(const Frame& f);
/// Counter-clockwise quarter turn.
Frame rotate90(const Frame& f);
Frame crop(const Frame& f, Index top, Index left, Index size);

struct StepRecord {
  Index step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainOptions {
  std::filesystem::path out;  ///< loss.csv and checkpoints; empty writes nothing
  /// Stop after this many completed updates (defaults to total_steps).
  std::optional<Index> stop_after;
  /// Called after each update; returning false stops training early.
  std::function<bool(const StepRecord&, const TrainState&)> on_step;
};

/// Runs updates from state.step until the stop point. Throws
/// std::runtime_error on a non-finite loss, naming the step.
std::vector<StepRecord> train_loop(TrainState& state, const std::vector<ClipSeptuplet>& dataset,
                                   const TrainOptions& options = {});

/// Forward pass without recording; outputs clamped to [0,1].
std::vector<Frame> infer(const Model<float>& model, const std::vector<Frame>& inputs);

}  // namespace stvsr
