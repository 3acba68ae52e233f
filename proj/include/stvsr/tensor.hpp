#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stvsr {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised for incompatible extents; the message names the offending shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

// One vertex of the gradient tape. Parents are owned; the adjoint closure
// reads them through `parents` so it never captures its own node.
template <typename Scalar>
struct Node {
  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;  // empty until backward touches it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  template <typename Derived>
  void accumulate(const Eigen::ArrayBase<Derived>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) grad = Buffer<Scalar>::Zero(value.size());
    grad += g;
  }
};

/// Gradient recording is on by default; NoGradGuard disables it for the
/// current thread (inference, finite-difference probes).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major n-dimensional array with reverse-mode differentiation.
///
/// A Tensor is a handle: copies share the underlying node, like a
/// `std::shared_ptr`. Results of operations are fresh nodes; values of a
/// node that participates in a recorded graph are never mutated in place.
template <typename Scalar>
class Tensor {
 public:
  using Array = Buffer<Scalar>;
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Tensor() = default;
  Tensor(Shape shape, Array values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Scalar> values,
                     bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, Scalar stddev = 1,
                      bool requires_grad = false);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, Scalar lo, Scalar hi,
                        bool requires_grad = false);

  /// Builds an operation result. Records `parents` and `backward` only when
  /// gradient mode is on and some parent requires a gradient.
  static Tensor make_result(Shape shape, Array values,
                            std::vector<Tensor> parents,
                            std::function<void(Node<Scalar>&)> backward,
                            const char* op);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index numel() const { return node_->value.size(); }

  const Array& values() const { return node_->value; }
  /// Writable storage; only legal on leaves (parameters, inputs).
  Array& mutable_values();
  Scalar item() const;
  Scalar at(Index flat) const { return node_->value(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient buffer; zeros of matching size when nothing accumulated yet.
  Array grad() const;
  void zero_grad() { node_->grad.resize(0); }

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of values into a fresh leaf of another scalar type.
  template <typename Other>
  Tensor<Other> cast(bool requires_grad = false) const {
    return Tensor<Other>(shape(), values().template cast<Other>(), requires_grad);
  }

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

/// Requires an exact shape match; throws ShapeError naming `what`.
void require_shape(const Shape& actual, const Shape& expected, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward(const Tensor<float>&);
extern template void backward(const Tensor<double>&);

}  // namespace stvsr
