#include "stvsr/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace stvsr {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void require_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (actual != expected)
    throw ShapeError(what + ": expected shape " + to_string(expected) + ", got " +
                     to_string(actual));
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values, bool requires_grad)
    : node_(std::make_shared<Node<Scalar>>()) {
  for (Index d : shape)
    if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape));
  if (stvsr::numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(stvsr::numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
  const Index n = stvsr::numel(shape);
  return Tensor(std::move(shape), Array::Zero(n), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  const Index n = stvsr::numel(shape);
  return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
  return full({}, value, requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(Shape shape, std::initializer_list<Scalar> values,
                                    bool requires_grad) {
  Array a(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) a(i++) = v;
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::randn(Shape shape, std::mt19937_64& rng, Scalar stddev,
                                     bool requires_grad) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  Array a(stvsr::numel(shape));
  for (Index i = 0; i < a.size(); ++i) a(i) = static_cast<Scalar>(dist(rng));
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::uniform(Shape shape, std::mt19937_64& rng, Scalar lo, Scalar hi,
                                       bool requires_grad) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  Array a(stvsr::numel(shape));
  for (Index i = 0; i < a.size(); ++i) a(i) = static_cast<Scalar>(dist(rng));
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(Shape shape, Array values, std::vector<Tensor> parents,
                                           std::function<void(Node<Scalar>&)> backward,
                                           const char* op) {
  Tensor out(std::move(shape), std::move(values));
  out.node_->op = op;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  const int n = ndim();
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
typename Tensor<Scalar>::Array& Tensor<Scalar>::mutable_values() {
  if (!node_->is_leaf())
    throw std::logic_error("in-place write to a non-leaf tensor (op " +
                           std::string(node_->op) + ")");
  return node_->value;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value(0);
}

template <typename Scalar>
void Tensor<Scalar>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw std::logic_error("requires_grad toggled on a non-leaf tensor");
  node_->requires_grad = on;
}

template <typename Scalar>
typename Tensor<Scalar>::Array Tensor<Scalar>::grad() const {
  if (has_grad()) return node_->grad;
  return Array::Zero(numel());
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(shape(), values(), false);
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a topological order.
  using NodeT = Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* n : order)
    if (!n->is_leaf()) n->grad.resize(0);
  loss.node()->grad = Buffer<Scalar>::Ones(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->is_leaf() || n->grad.size() == 0) continue;
    n->backward(*n);
    n->grad.resize(0);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace stvsr
