#include "stvsr/model.hpp"

#include <random>

namespace stvsr {

template <typename S>
Model<S> Model<S>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.config = config;
  m.extractor = FeatureExtractor<S>::init(config, rng);
  m.fusion = GlobalFusion<S>::init(config, rng);
  m.refine = TemporalRefine<S>::init(config, rng);
  m.alignment = MultiscaleAlignment<S>::init(config, config.output_frames(), rng);
  m.reconstructor = Reconstructor<S>::init(config, rng);
  return m;
}

template <typename S>
void Model<S>::check_input(const std::vector<Tensor<S>>& frames) const {
  if (static_cast<Index>(frames.size()) != config.input_frames)
    throw ShapeError("model expects " + std::to_string(config.input_frames) + " frames, got " +
                     std::to_string(frames.size()));
  const Index step = std::max<Index>(2, Index{1} << (config.pyramid_levels - 1));
  for (const auto& f : frames) {
    if (f.shape() != frames[0].shape() || f.ndim() != 3 || f.dim(0) != 3)
      throw ShapeError("model frames must share one [3,h,w] shape, got " + to_string(f.shape()));
    if (f.dim(1) % step || f.dim(2) % step)
      throw ShapeError("frame extents " + to_string(f.shape()) + " must be divisible by " +
                       std::to_string(step));
  }
}

template <typename S>
std::vector<Tensor<S>> Model<S>::operator()(const std::vector<Tensor<S>>& frames) const {
  check_input(frames);
  std::vector<Tensor<S>> features;
  for (const auto& f : frames) features.push_back(extractor(f));
  std::vector<Tensor<S>> sequence;
  for (std::size_t i = 0; i < features.size(); ++i) {
    sequence.push_back(features[i]);
    if (i + 1 == features.size()) break;
    const Tensor<S> mid = fusion(features[i], features[i + 1]);
    sequence.push_back(refine(features[i], mid, features[i + 1]));
  }
  std::vector<Tensor<S>> out;
  for (const auto& f : alignment(sequence)) out.push_back(reconstructor(f));
  return out;
}

template <typename S>
ParamList<S> Model<S>::parameters() const {
  ParamList<S> out;
  extractor.collect(out, "extract");
  fusion.collect(out, "gfm");
  refine.collect(out, "tfe");
  alignment.collect(out, "msmm");
  reconstructor.collect(out, "recon");
  return out;
}

template struct Model<float>;
template struct Model<double>;

}  // namespace stvsr
