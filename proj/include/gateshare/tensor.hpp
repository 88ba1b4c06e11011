#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace gateshare {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {

/// One node of the computation record. Nodes are created in topological order
/// (an operation's inputs always exist before its output) and a backward
/// traversal visits each node exactly once.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_consumed = false;  // set when backward() ran from this node
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates into the parents' grad buffers given this node's grad.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  void ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Dense row-major tensor of doubles participating in reverse-mode
/// differentiation. Value semantics: copying a Tensor copies a handle to the
/// same node. Values are immutable after creation except the grad slot and,
/// for leaf parameters, the data updated by an optimizer between graph builds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  bool requires_grad() const;
  const std::vector<double>& data() const;
  /// Leaf parameter update access (optimizers). Not for graph intermediates.
  std::vector<double>& mutable_data();
  bool has_grad() const;
  const std::vector<double>& grad() const;
  double value() const;  // scalar convenience
  double at(std::size_t flat_index) const;

  /// Reverse-mode sweep from a scalar. Populates grad for every reachable
  /// tensor with requires_grad; accumulation is additive across uses and
  /// across repeated sweeps on distinct roots.
  void backward();

  /// Clears this tensor's grad slot (and re-arms backward for loss nodes).
  void zero_grad();

  /// Value copy detached from the graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  detail::NodePtr handle() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;

  friend Tensor make_op_tensor(const char* op, Shape shape,
                               std::vector<double> data,
                               std::vector<detail::NodePtr> parents,
                               std::function<void(detail::Node&)> backward_fn);
};

// ---------------------------------------------------------------------------
// Registered primitives. Each op checks shapes (throwing ShapeError naming the
// op and both shapes on mismatch), computes the forward value, and registers
// the gradient rule. Elementwise binary ops broadcast only between identical
// shapes or scalar-vs-tensor.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);

/// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[n,d_in] * W[d_in,d_out] + b[d_out] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& a);     // subgradient 0 at 0
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + e^x), overflow-safe
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);      // subgradient 0 at 0

/// Softmax over the trailing axis. `axis` must name the trailing axis.
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

/// Scalar at a flat index of a 1-D tensor.
Tensor select(const Tensor& a, std::size_t index);
/// Column j of a 2-D tensor as a vector [n].
Tensor column(const Tensor& a, std::size_t j);
/// Scales row i of x[n,f] by v[i].
Tensor mul_rows(const Tensor& x, const Tensor& v);

Tensor detach(const Tensor& a);

}  // namespace gateshare
