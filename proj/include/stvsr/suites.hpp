#pragma once

#include "stvsr/blocks.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stvsr::suites {

struct Result {
  std::string name;
  bool ok = true;
  Index instances = 0;
  double worst = 0.0;  ///< largest error seen, in the suite's own metric
  std::string detail;  ///< first failure, if any
  double seconds = 0.0;
};

/// Finite-difference checks of every differentiable primitive, `instances`
/// random instances each, in 64-bit with relative tolerance 1e-3.
std::vector<Result> primitive_gradients(Index instances = 20, std::uint64_t seed = 1);

/// The same for the composite blocks (feature extraction, fusion pyramid,
/// temporal refinement, register block, alignment, loss). Sizes are drawn per
/// instance; `base` supplies the register/position-encoding switches.
std::vector<Result> block_gradients(const ModelConfig& base, Index instances = 20,
                                    std::uint64_t seed = 2);

/// Parallel vs sequential scans on random instances (L <= 256), relative 1e-5,
/// plus state handoff across a split, within 1e-6.
Result scan_equivalence(Index instances = 100, std::uint64_t seed = 3);

/// Scan-order bijection and alternation up to 8x8, bit-exact register and
/// pixel-shuffle round trips, rotary norm and relative-position identities.
Result geometry(std::uint64_t seed = 4);

/// n+1 LR frames of h x w give 2n+1 frames of sh x sw.
Result shape_contract(const ModelConfig& cfg, Index h, Index w, std::uint64_t seed = 5);

/// Under zero initialisation the refinement returns its middle input and the
/// alignment returns its skip convolution, within 1e-6.
Result init_identities(std::uint64_t seed = 6);

/// Constant frame gives 0, checkerboard 1, and offsets leave the ratio unchanged.
Result hf_analyzer(std::uint64_t seed = 7);

std::string format(const Result& r);

}  // namespace stvsr::suites
