#pragma once

#include "stvsr/ops.hpp"
#include "stvsr/params.hpp"

#include <random>

namespace stvsr {

enum class ScanAlgorithm {
  sequential,
  parallel,  ///< chunked associative scan over (a2*a1, a2*b1 + b2)
};

/// Input-dependent discretization of a diagonal state-space layer.
///
/// For a token x_t (width `d_model`):
///   delta_t = softplus(x_t W_delta + b_delta)   (per channel, > 0)
///   B_t     = x_t W_B,  C_t = x_t W_C           (width `d_state`)
///   A       = -exp(A_log)                        (strictly negative)
template <typename S>
struct SsmParams {
  Index d_model = 0;
  Index d_state = 0;
  Tensor<S> a_log;         // [d_model, d_state]
  Tensor<S> skip;          // D, [d_model]
  Tensor<S> delta_weight;  // [d_model, d_model]
  Tensor<S> delta_bias;    // [d_model]
  Tensor<S> b_weight;      // [d_model, d_state]
  Tensor<S> c_weight;      // [d_model, d_state]

  static SsmParams init(Index d_model, Index d_state, std::mt19937_64& rng);
  void collect(ParamList<S>& out, const std::string& prefix) const;
  /// Continuous transition A = -exp(A_log), as a graph node.
  Tensor<S> transition() const;
};

/// Hidden state h [d_model, d_state] after a scanned prefix.
template <typename S>
struct SsmState {
  Tensor<S> h;

  static SsmState zeros(Index d_model, Index d_state) {
    return {Tensor<S>::zeros({d_model, d_state})};
  }
};

template <typename S>
struct ScanResult {
  Tensor<S> y;          // [L, d_model]
  SsmState<S> state;    // final state
};

/// The fused recurrence on discretization inputs:
///   h_t = exp(delta_t A) * h_{t-1} + delta_t B_t x_t,  y_t = C_t . h_t + D * x_t
/// x, delta [L,E]; a [E,S]; b, c [L,S]; skip [E]; h0 [E,S]. Differentiable in
/// every input. Throws std::domain_error on non-finite input.
template <typename S>
ScanResult<S> selective_scan_core(const Tensor<S>& x, const Tensor<S>& delta, const Tensor<S>& a,
                                  const Tensor<S>& b, const Tensor<S>& c, const Tensor<S>& skip,
                                  const Tensor<S>& h0, ScanAlgorithm algorithm);

/// Full selective scan of x [L, d_model]: projections, discretization, recurrence.
template <typename S>
ScanResult<S> selective_scan(const Tensor<S>& x, const SsmParams<S>& p, const SsmState<S>& h0,
                             ScanAlgorithm algorithm = ScanAlgorithm::parallel);

template <typename S>
ScanResult<S> selective_scan_sequential(const Tensor<S>& x, const SsmParams<S>& p,
                                        const SsmState<S>& h0) {
  return selective_scan(x, p, h0, ScanAlgorithm::sequential);
}

template <typename S>
ScanResult<S> selective_scan_parallel(const Tensor<S>& x, const SsmParams<S>& p,
                                      const SsmState<S>& h0) {
  return selective_scan(x, p, h0, ScanAlgorithm::parallel);
}

/// Forward scan of x plus the reversed scan of reverse(x), un-reversed and
/// summed. `state` is the forward direction's final state.
template <typename S>
ScanResult<S> bidirectional_scan(const Tensor<S>& x, const SsmParams<S>& forward,
                                 const SsmParams<S>& backward, const SsmState<S>& h0,
                                 ScanAlgorithm algorithm = ScanAlgorithm::parallel);

/// Reverses the row order of x [L,...].
template <typename S>
Tensor<S> reverse_rows(const Tensor<S>& x);

/// Number of chunks the parallel path splits a length-L scan into. Fixed by L
/// alone so results do not depend on the host's core count.
Index scan_chunk_count(Index length);

}  // namespace stvsr
