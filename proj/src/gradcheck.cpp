#include "stvsr/gradcheck.hpp"

#include "stvsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace stvsr::gradcheck {

namespace {

double pass_metric(double fd, double tape, double abs_tol) {
  const double diff = std::abs(fd - tape);
  if (diff <= abs_tol) return 0.0;
  return diff / std::max(std::abs(fd), std::abs(tape));
}

double eval(const LossFn& loss) {
  NoGradGuard guard;
  return loss().item();
}

}  // namespace

Tensord random_projection(const Tensord& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensord w = Tensord::randn(out.shape(), rng);
  return sum(mul(out, w));
}

Report check(const LossFn& loss, const ParamList<double>& inputs, const Options& options) {
  Report report;
  auto record = [&](double err, const std::string& where) {
    ++report.checks;
    if (err > report.worst_error) {
      report.worst_error = err;
      report.worst_where = where;
    }
    if (err > options.rel_tol) report.ok = false;
  };

  for (const auto& in : inputs) in.tensor.node()->grad.resize(0);
  backward(loss());
  std::vector<Eigen::ArrayXd> tape;
  tape.reserve(inputs.size());
  for (const auto& in : inputs) tape.push_back(in.tensor.grad());

  std::mt19937_64 rng(options.seed);
  const double h = options.step;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensord t = inputs[i].tensor;
    auto& values = t.mutable_values();
    std::vector<Index> coords(static_cast<std::size_t>(t.numel()));
    std::iota(coords.begin(), coords.end(), 0);
    if (static_cast<Index>(coords.size()) > options.coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(options.coords_per_tensor));
    }
    for (Index k : coords) {
      const double saved = values(k);
      values(k) = saved + h;
      const double up = eval(loss);
      values(k) = saved - h;
      const double down = eval(loss);
      values(k) = saved;
      const double fd = (up - down) / (2 * h);
      std::ostringstream where;
      where << inputs[i].path << "[" << k << "] fd=" << fd << " tape=" << tape[i](k);
      record(pass_metric(fd, tape[i](k), options.abs_tol), where.str());
    }
  }

  for (Index d = 0; d < options.directions; ++d) {
    std::vector<Eigen::ArrayXd> dir;
    std::normal_distribution<double> normal;
    double predicted = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Eigen::ArrayXd v(inputs[i].tensor.numel());
      for (Index k = 0; k < v.size(); ++k) v(k) = normal(rng);
      dir.push_back(std::move(v));
    }
    // Unit length, so every probe moves the inputs by exactly `step`.
    double norm = 0.0;
    for (const auto& v : dir) norm += v.square().sum();
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (norm > 0) dir[i] /= norm;
      predicted += (dir[i] * tape[i]).sum();
    }
    std::vector<Eigen::ArrayXd> saved;
    for (const auto& in : inputs) saved.push_back(in.tensor.values());
    auto set = [&](double scale) {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensord t = inputs[i].tensor;
        t.mutable_values() = saved[i] + scale * dir[i];
      }
    };
    set(h);
    const double up = eval(loss);
    set(-h);
    const double down = eval(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensord t = inputs[i].tensor;
      t.mutable_values() = saved[i];
    }
    const double fd = (up - down) / (2 * h);
    std::ostringstream where;
    where << "direction " << d << " fd=" << fd << " tape=" << predicted;
    record(pass_metric(fd, predicted, options.abs_tol), where.str());
  }
  return report;
}

}  // namespace stvsr::gradcheck
