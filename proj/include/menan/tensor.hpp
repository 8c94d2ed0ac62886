#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace menan::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Closed set of recorded operations.
enum class OpKind {
  Leaf,
  MatMul,
  Linear,
  Conv1d,
  GruCell,
  PRelu,
  Softmax,
  LogSoftmax,
  Log,
  Add,
  Sub,
  Mul,
  Scale,
  Sum,
  Mean,
  MeanTime,
  StdTime,
  MaxTime,
  Concat,
  Stack,
  SelectRow,
  ScaleGrad,
};

const char* op_name(OpKind kind);

struct Node;
using BackwardFn = std::function<void(Node&)>;

/// One vertex of the computation graph. Values are immutable once recorded,
/// except leaves, which the optimizer updates in place.
struct Node {
  OpKind kind = OpKind::Leaf;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  /// Gradient buffer of this node, allocated (zeroed) on first use.
  std::span<double> grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  OpKind kind() const { return node_->kind; }

  std::span<const double> values() const { return node_->value; }
  /// In-place access for leaves (parameter updates, initialisation).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Every reachable node with
/// requires_grad set receives its gradient; other nodes are untouched.
void backward(const Tensor& loss);

/// Reachable nodes in topological order (inputs before consumers).
std::vector<Node*> topological_order(const Tensor& root);

}  // namespace menan::numerics
