#include "stvsr/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace stvsr {

Index scan_chunk_count(Index length) { return std::clamp<Index>(length / 64, 1, 8); }

namespace {

struct ScanProblem {
  Index len = 0, width = 0, state = 0;
  Eigen::ArrayXd x, delta, a, b, c, skip, h0;

  template <typename S>
  static ScanProblem from(const Tensor<S>& x, const Tensor<S>& delta, const Tensor<S>& a,
                          const Tensor<S>& b, const Tensor<S>& c, const Tensor<S>& skip,
                          const Tensor<S>& h0) {
    ScanProblem p;
    if (x.ndim() != 2) throw ShapeError("selective scan expects x [L,E], got " + to_string(x.shape()));
    p.len = x.dim(0);
    p.width = x.dim(1);
    p.state = a.ndim() == 2 ? a.dim(1) : 0;
    if (p.len < 1) throw ShapeError("selective scan needs at least one token");
    require_shape(delta.shape(), {p.len, p.width}, "scan delta");
    require_shape(a.shape(), {p.width, p.state}, "scan transition A");
    require_shape(b.shape(), {p.len, p.state}, "scan input matrix B");
    require_shape(c.shape(), {p.len, p.state}, "scan output matrix C");
    require_shape(skip.shape(), {p.width}, "scan skip D");
    require_shape(h0.shape(), {p.width, p.state}, "scan initial state");
    p.x = x.values().template cast<double>();
    p.delta = delta.values().template cast<double>();
    p.a = a.values().template cast<double>();
    p.b = b.values().template cast<double>();
    p.c = c.values().template cast<double>();
    p.skip = skip.values().template cast<double>();
    p.h0 = h0.values().template cast<double>();
    for (const Eigen::ArrayXd* arr : {&p.x, &p.delta, &p.a, &p.b, &p.c, &p.skip, &p.h0})
      if (!arr->allFinite()) throw std::domain_error("selective scan received non-finite input");
    return p;
  }
};

struct ScanOutput {
  Eigen::ArrayXd y;       // [L*E]
  Eigen::ArrayXd final;   // [E*S]
  Eigen::ArrayXd states;  // [(L+1)*E*S] when kept, h_0..h_L
};

// Runs tokens [t0,t1) from state h (updated in place).
void run_span(const ScanProblem& p, Index t0, Index t1, Eigen::ArrayXd& h, ScanOutput& out,
              bool keep_states) {
  const Index es = p.width * p.state;
  for (Index t = t0; t < t1; ++t) {
    for (Index e = 0; e < p.width; ++e) {
      const double dt = p.delta(t * p.width + e);
      const double xe = p.x(t * p.width + e);
      double acc = 0.0;
      for (Index s = 0; s < p.state; ++s) {
        const Index k = e * p.state + s;
        h(k) = std::exp(dt * p.a(k)) * h(k) + dt * p.b(t * p.state + s) * xe;
        acc += p.c(t * p.state + s) * h(k);
      }
      out.y(t * p.width + e) = acc + p.skip(e) * xe;
    }
    if (keep_states) out.states.segment((t + 1) * es, es) = h;
  }
}

// Composes the affine maps of tokens [t0,t1) into one pair (a, b): h -> a*h + b.
void reduce_span(const ScanProblem& p, Index t0, Index t1, Eigen::ArrayXd& a_acc,
                 Eigen::ArrayXd& b_acc) {
  a_acc.setOnes(p.width * p.state);
  b_acc.setZero(p.width * p.state);
  for (Index t = t0; t < t1; ++t)
    for (Index e = 0; e < p.width; ++e) {
      const double dt = p.delta(t * p.width + e);
      const double xe = p.x(t * p.width + e);
      for (Index s = 0; s < p.state; ++s) {
        const Index k = e * p.state + s;
        const double at = std::exp(dt * p.a(k));
        a_acc(k) *= at;
        b_acc(k) = at * b_acc(k) + dt * p.b(t * p.state + s) * xe;
      }
    }
}

template <typename F>
void for_each_chunk(Index chunks, F&& body) {
  const unsigned hw = std::thread::hardware_concurrency();
  if (chunks == 1 || hw < 2) {
    for (Index k = 0; k < chunks; ++k) body(k);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(chunks));
  for (Index k = 0; k < chunks; ++k) workers.emplace_back([&body, k] { body(k); });
  for (auto& w : workers) w.join();
}

ScanOutput run_scan(const ScanProblem& p, ScanAlgorithm algorithm, bool keep_states) {
  const Index es = p.width * p.state;
  ScanOutput out;
  out.y.resize(p.len * p.width);
  if (keep_states) {
    out.states.resize((p.len + 1) * es);
    out.states.head(es) = p.h0;
  }
  const Index chunks = algorithm == ScanAlgorithm::parallel ? scan_chunk_count(p.len) : 1;
  if (chunks == 1) {
    Eigen::ArrayXd h = p.h0;
    run_span(p, 0, p.len, h, out, keep_states);
    out.final = std::move(h);
    return out;
  }
  auto bounds = [&](Index k) {
    return std::pair{k * p.len / chunks, (k + 1) * p.len / chunks};
  };
  // Reduce each chunk to one affine pair, prefix the pairs, rescan with carries.
  std::vector<Eigen::ArrayXd> agg_a(static_cast<std::size_t>(chunks)),
      agg_b(static_cast<std::size_t>(chunks));
  for_each_chunk(chunks, [&](Index k) {
    auto [t0, t1] = bounds(k);
    reduce_span(p, t0, t1, agg_a[static_cast<std::size_t>(k)], agg_b[static_cast<std::size_t>(k)]);
  });
  std::vector<Eigen::ArrayXd> carry(static_cast<std::size_t>(chunks + 1));
  carry[0] = p.h0;
  for (Index k = 0; k < chunks; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    carry[uk + 1] = agg_a[uk] * carry[uk] + agg_b[uk];
  }
  for_each_chunk(chunks, [&](Index k) {
    auto [t0, t1] = bounds(k);
    Eigen::ArrayXd h = carry[static_cast<std::size_t>(k)];
    run_span(p, t0, t1, h, out, keep_states);
    if (k == chunks - 1) out.final = std::move(h);
  });
  return out;
}

}  // namespace

template <typename S>
ScanResult<S> selective_scan_core(const Tensor<S>& x, const Tensor<S>& delta, const Tensor<S>& a,
                                  const Tensor<S>& b, const Tensor<S>& c, const Tensor<S>& skip,
                                  const Tensor<S>& h0, ScanAlgorithm algorithm) {
  auto problem = std::make_shared<ScanProblem>(ScanProblem::from(x, delta, a, b, c, skip, h0));
  const Index len = problem->len, width = problem->width, state = problem->state;
  const Index es = width * state;
  const bool recording = grad_enabled() && (x.requires_grad() || delta.requires_grad() ||
                                            a.requires_grad() || b.requires_grad() ||
                                            c.requires_grad() || skip.requires_grad() ||
                                            h0.requires_grad());
  auto result = std::make_shared<ScanOutput>(run_scan(*problem, algorithm, recording));

  Buffer<S> packed(len * width + es);
  packed.head(len * width) = result->y.template cast<S>();
  packed.tail(es) = result->final.template cast<S>();

  auto bw = [problem, result](Node<S>& self) {
    const ScanProblem& p = *problem;
    const Index es = p.width * p.state;
    const Eigen::ArrayXd gy = self.grad.head(p.len * p.width).template cast<double>();
    Eigen::ArrayXd lambda = self.grad.tail(es).template cast<double>();
    Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(p.len * p.width);
    Eigen::ArrayXd gdelta = Eigen::ArrayXd::Zero(p.len * p.width);
    Eigen::ArrayXd ga = Eigen::ArrayXd::Zero(es);
    Eigen::ArrayXd gb = Eigen::ArrayXd::Zero(p.len * p.state);
    Eigen::ArrayXd gc = Eigen::ArrayXd::Zero(p.len * p.state);
    Eigen::ArrayXd gskip = Eigen::ArrayXd::Zero(p.width);
    const Eigen::ArrayXd& states = result->states;
    for (Index t = p.len; t-- > 0;) {
      const double* h_t = states.data() + (t + 1) * es;
      const double* h_prev = states.data() + t * es;
      for (Index e = 0; e < p.width; ++e) {
        const double g = gy(t * p.width + e);
        const double dt = p.delta(t * p.width + e);
        const double xe = p.x(t * p.width + e);
        gskip(e) += g * xe;
        gx(t * p.width + e) += g * p.skip(e);
        double gdt = 0.0, gxe = 0.0;
        for (Index s = 0; s < p.state; ++s) {
          const Index k = e * p.state + s;
          const double bts = p.b(t * p.state + s);
          const double lam = lambda(k) + g * p.c(t * p.state + s);
          gc(t * p.state + s) += g * h_t[k];
          const double at = std::exp(dt * p.a(k));
          const double g_at = lam * h_prev[k] * at;
          gdt += g_at * p.a(k) + lam * bts * xe;
          ga(k) += g_at * dt;
          gb(t * p.state + s) += lam * dt * xe;
          gxe += lam * dt * bts;
          lambda(k) = lam * at;
        }
        gdelta(t * p.width + e) += gdt;
        gx(t * p.width + e) += gxe;
      }
    }
    const Eigen::ArrayXd* grads[] = {&gx, &gdelta, &ga, &gb, &gc, &gskip, &lambda};
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      self.parents[i]->accumulate(grads[i]->template cast<S>());
  };

  Tensor<S> out = Tensor<S>::make_result({len * width + es}, std::move(packed),
                                         {x, delta, a, b, c, skip, h0}, bw, "selective_scan");
  ScanResult<S> r;
  r.y = reshape(slice(out, 0, 0, len * width), {len, width});
  r.state.h = reshape(slice(out, 0, len * width, es), {width, state});
  return r;
}

template <typename S>
SsmParams<S> SsmParams<S>::init(Index d_model, Index d_state, std::mt19937_64& rng) {
  if (d_model < 1 || d_state < 1) throw std::invalid_argument("SSM widths must be positive");
  SsmParams p;
  p.d_model = d_model;
  p.d_state = d_state;
  Buffer<S> a_log(d_model * d_state);
  for (Index e = 0; e < d_model; ++e)
    for (Index s = 0; s < d_state; ++s)
      a_log(e * d_state + s) = static_cast<S>(std::log(static_cast<double>(s + 1)));
  p.a_log = Tensor<S>({d_model, d_state}, std::move(a_log), true);
  p.skip = Tensor<S>::full({d_model}, S(1), true);
  p.delta_weight = fan_in_param<S>({d_model, d_model}, d_model, rng);
  // Step sizes start log-uniform in [1e-3, 1e-1]; store the inverse softplus.
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  Buffer<S> bias(d_model);
  for (Index e = 0; e < d_model; ++e) {
    const double dt = std::exp(u(rng));
    bias(e) = static_cast<S>(dt + std::log(-std::expm1(-dt)));
  }
  p.delta_bias = Tensor<S>({d_model}, std::move(bias), true);
  p.b_weight = fan_in_param<S>({d_model, d_state}, d_model, rng);
  p.c_weight = fan_in_param<S>({d_model, d_state}, d_model, rng);
  return p;
}

template <typename S>
void SsmParams<S>::collect(ParamList<S>& out, const std::string& prefix) const {
  out.push_back({join_path(prefix, "a_log"), a_log});
  out.push_back({join_path(prefix, "skip"), skip});
  out.push_back({join_path(prefix, "delta_weight"), delta_weight});
  out.push_back({join_path(prefix, "delta_bias"), delta_bias});
  out.push_back({join_path(prefix, "b_weight"), b_weight});
  out.push_back({join_path(prefix, "c_weight"), c_weight});
}

template <typename S>
Tensor<S> SsmParams<S>::transition() const {
  return neg(exp(a_log));
}

template <typename S>
ScanResult<S> selective_scan(const Tensor<S>& x, const SsmParams<S>& p, const SsmState<S>& h0,
                             ScanAlgorithm algorithm) {
  if (x.ndim() != 2 || x.dim(1) != p.d_model)
    throw ShapeError("selective_scan: input " + to_string(x.shape()) + " does not match width " +
                     std::to_string(p.d_model));
  const Tensor<S> delta = softplus(add(matmul(x, p.delta_weight), p.delta_bias));
  const Tensor<S> b = matmul(x, p.b_weight);
  const Tensor<S> c = matmul(x, p.c_weight);
  const Tensor<S> h = h0.h.defined() ? h0.h : Tensor<S>::zeros({p.d_model, p.d_state});
  return selective_scan_core(x, delta, p.transition(), b, c, p.skip, h, algorithm);
}

template <typename S>
Tensor<S> reverse_rows(const Tensor<S>& x) {
  const Index n = x.dim(0);
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = n - 1 - i;
  return gather_permute(x, std::span<const Index>(order));
}

template <typename S>
ScanResult<S> bidirectional_scan(const Tensor<S>& x, const SsmParams<S>& forward,
                                 const SsmParams<S>& backward, const SsmState<S>& h0,
                                 ScanAlgorithm algorithm) {
  ScanResult<S> fwd = selective_scan(x, forward, h0, algorithm);
  ScanResult<S> bwd = selective_scan(reverse_rows(x), backward,
                                     SsmState<S>::zeros(backward.d_model, backward.d_state),
                                     algorithm);
  return {add(fwd.y, reverse_rows(bwd.y)), fwd.state};
}

#define STVSR_INSTANTIATE(S)                                                                     \
  template struct SsmParams<S>;                                                                  \
  template ScanResult<S> selective_scan_core(const Tensor<S>&, const Tensor<S>&,                 \
                                             const Tensor<S>&, const Tensor<S>&,                 \
                                             const Tensor<S>&, const Tensor<S>&,                 \
                                             const Tensor<S>&, ScanAlgorithm);                   \
  template ScanResult<S> selective_scan(const Tensor<S>&, const SsmParams<S>&,                   \
                                        const SsmState<S>&, ScanAlgorithm);                      \
  template Tensor<S> reverse_rows(const Tensor<S>&);                                             \
  template ScanResult<S> bidirectional_scan(const Tensor<S>&, const SsmParams<S>&,               \
                                            const SsmParams<S>&, const SsmState<S>&,             \
                                            ScanAlgorithm);

STVSR_INSTANTIATE(float)
STVSR_INSTANTIATE(double)
#undef STVSR_INSTANTIATE

}  // namespace stvsr
