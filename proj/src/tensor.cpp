#include "gateshare/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "gateshare/error.hpp"

namespace gateshare {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

namespace detail {

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

}  // namespace detail

using detail::Node;
using detail::NodePtr;

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  if (n->data.size() != shape_numel(n->shape))
    throw ShapeError("tensor", "data length " + std::to_string(n->data.size()) +
                                   " does not match shape " +
                                   shape_to_string(n->shape));
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(op, "operand is an empty tensor");
}

[[noreturn]] void throw_binary_mismatch(const char* op, const Shape& a,
                                        const Shape& b) {
  throw ShapeError(op, "incompatible shapes " + shape_to_string(a) + " and " +
                           shape_to_string(b));
}

}  // namespace

Tensor make_op_tensor(const char* op, Shape shape, std::vector<double> data,
                      std::vector<NodePtr> parents,
                      std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->requires_grad;
  n->requires_grad = needs;
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(make_leaf(shape, std::vector<double>(shape_numel(shape), 0.0),
                          requires_grad));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return Tensor(make_leaf(shape, std::vector<double>(shape_numel(shape), value),
                          requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_leaf(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor(make_leaf({values.size()}, std::vector<double>(values),
                          requires_grad));
}

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const {
  check_defined(*this, "requires_grad");
  return node_->requires_grad;
}

const std::vector<double>& Tensor::data() const {
  check_defined(*this, "data");
  return node_->data;
}

std::vector<double>& Tensor::mutable_data() {
  check_defined(*this, "mutable_data");
  return node_->data;
}

bool Tensor::has_grad() const {
  check_defined(*this, "has_grad");
  return !node_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
  check_defined(*this, "grad");
  if (node_->grad.empty())
    throw Error("grad: no gradient present (backward not run or cleared)");
  return node_->grad;
}

double Tensor::value() const {
  check_defined(*this, "value");
  if (node_->data.size() != 1)
    throw ShapeError("value", "tensor with shape " + shape_to_string(node_->shape) +
                                  " is not a scalar");
  return node_->data[0];
}

double Tensor::at(std::size_t flat_index) const {
  check_defined(*this, "at");
  return node_->data.at(flat_index);
}

void Tensor::zero_grad() {
  check_defined(*this, "zero_grad");
  node_->grad.clear();
  node_->backward_consumed = false;
}

Tensor Tensor::detach() const {
  check_defined(*this, "detach");
  return Tensor(make_leaf(node_->shape, node_->data, false));
}

void Tensor::backward() {
  check_defined(*this, "backward");
  Node* root = node_.get();
  if (root->data.size() != 1)
    throw ShapeError("backward",
                     "loss must be scalar, got shape " + shape_to_string(root->shape));
  if (root->backward_consumed)
    throw Error("backward: second backward from the same loss without reset");
  root->backward_consumed = true;
  if (!root->requires_grad) return;

  // Post-order DFS over the requires_grad subgraph. Creation order already
  // topologically sorts inputs before outputs; the DFS recovers that order
  // for exactly the reachable nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back().n;
    const std::size_t i = stack.back().next_child;
    if (i < n->parents.size()) {
      ++stack.back().next_child;
      Node* c = n->parents[i].get();
      if (c->requires_grad && seen.find(c) == seen.end()) {
        seen.insert(c);
        stack.push_back({c, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with scalar broadcast.
// ---------------------------------------------------------------------------

namespace {

enum class Bcast { Same, ScalarLeft, ScalarRight };

Bcast classify(const char* op, const Shape& a, const Shape& b) {
  if (same_shape(a, b)) return Bcast::Same;
  if (shape_numel(a) == 1) return Bcast::ScalarLeft;
  if (shape_numel(b) == 1) return Bcast::ScalarRight;
  throw_binary_mismatch(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  const Bcast mode = classify("add", a.shape(), b.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  const Shape out_shape = (mode == Bcast::ScalarLeft) ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(out_shape));
  switch (mode) {
    case Bcast::Same:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case Bcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] + bv[i];
      break;
    case Bcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[0];
      break;
  }
  return make_op_tensor("add", out_shape, std::move(out), {a.handle(), b.handle()},
                        [mode](Node& self) {
                          Node& pa = *self.parents[0];
                          Node& pb = *self.parents[1];
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            if (mode == Bcast::ScalarLeft) {
                              for (double g : self.grad) pa.grad[0] += g;
                            } else {
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pa.grad[i] += self.grad[i];
                            }
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            if (mode == Bcast::ScalarRight) {
                              for (double g : self.grad) pb.grad[0] += g;
                            } else {
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pb.grad[i] += self.grad[i];
                            }
                          }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  const Bcast mode = classify("sub", a.shape(), b.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  const Shape out_shape = (mode == Bcast::ScalarLeft) ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(out_shape));
  switch (mode) {
    case Bcast::Same:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case Bcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] - bv[i];
      break;
    case Bcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[0];
      break;
  }
  return make_op_tensor("sub", out_shape, std::move(out), {a.handle(), b.handle()},
                        [mode](Node& self) {
                          Node& pa = *self.parents[0];
                          Node& pb = *self.parents[1];
                          if (pa.requires_grad) {
                            pa.ensure_grad();
                            if (mode == Bcast::ScalarLeft) {
                              for (double g : self.grad) pa.grad[0] += g;
                            } else {
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pa.grad[i] += self.grad[i];
                            }
                          }
                          if (pb.requires_grad) {
                            pb.ensure_grad();
                            if (mode == Bcast::ScalarRight) {
                              for (double g : self.grad) pb.grad[0] -= g;
                            } else {
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                pb.grad[i] -= self.grad[i];
                            }
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  const Bcast mode = classify("mul", a.shape(), b.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  const Shape out_shape = (mode == Bcast::ScalarLeft) ? b.shape() : a.shape();
  std::vector<double> out(shape_numel(out_shape));
  switch (mode) {
    case Bcast::Same:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
    case Bcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] * bv[i];
      break;
    case Bcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[0];
      break;
  }
  return make_op_tensor(
      "mul", out_shape, std::move(out), {a.handle(), b.handle()},
      [mode](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& av = pa.data;
        const auto& bv = pb.data;
        if (pa.requires_grad) {
          pa.ensure_grad();
          switch (mode) {
            case Bcast::Same:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * bv[i];
              break;
            case Bcast::ScalarLeft:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[0] += self.grad[i] * bv[i];
              break;
            case Bcast::ScalarRight:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * bv[0];
              break;
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          switch (mode) {
            case Bcast::Same:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * av[i];
              break;
            case Bcast::ScalarLeft:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * av[0];
              break;
            case Bcast::ScalarRight:
              for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb.grad[0] += self.grad[i] * av[i];
              break;
          }
        }
      });
}

Tensor scale(const Tensor& a, double c) {
  check_defined(a, "scale");
  std::vector<double> out(a.data());
  for (double& v : out) v *= c;
  return make_op_tensor("scale", a.shape(), std::move(out), {a.handle()},
                        [c](Node& self) {
                          Node& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            pa.grad[i] += self.grad[i] * c;
                        });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw_binary_mismatch("matmul", a.shape(), b.shape());
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aval = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aval * bv[p * m + j];
    }
  return make_op_tensor(
      "matmul", {n, m}, std::move(out), {a.handle(), b.handle()},
      [n, k, m](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
          pa.ensure_grad();
          // gA = g * B^T
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gv = g[i * m + j];
              for (std::size_t p = 0; p < k; ++p)
                pa.grad[i * k + p] += gv * pb.data[p * m + j];
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          // gB = A^T * g
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aval = pa.data[i * k + p];
              for (std::size_t j = 0; j < m; ++j)
                pb.grad[p * m + j] += aval * g[i * m + j];
            }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined(x, "linear");
  check_defined(w, "linear");
  check_defined(b, "linear");
  if (x.shape().size() != 2 || w.shape().size() != 2 ||
      x.shape()[1] != w.shape()[0])
    throw_binary_mismatch("linear", x.shape(), w.shape());
  if (b.shape().size() != 1 || b.shape()[0] != w.shape()[1])
    throw_binary_mismatch("linear", w.shape(), b.shape());
  const std::size_t n = x.shape()[0], din = x.shape()[1], dout = w.shape()[1];
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  std::vector<double> out(n * dout);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dout; ++j) out[i * dout + j] = bv[j];
    for (std::size_t p = 0; p < din; ++p) {
      const double xval = xv[i * din + p];
      for (std::size_t j = 0; j < dout; ++j)
        out[i * dout + j] += xval * wv[p * dout + j];
    }
  }
  return make_op_tensor(
      "linear", {n, dout}, std::move(out),
      {x.handle(), w.handle(), b.handle()}, [n, din, dout](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& g = self.grad;
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dout; ++j) {
              const double gv = g[i * dout + j];
              for (std::size_t p = 0; p < din; ++p)
                px.grad[i * din + p] += gv * pw.data[p * dout + j];
            }
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < din; ++p) {
              const double xval = px.data[i * din + p];
              for (std::size_t j = 0; j < dout; ++j)
                pw.grad[p * dout + j] += xval * g[i * dout + j];
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dout; ++j) pb.grad[j] += g[i * dout + j];
        }
      });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Bwd dfn) {
  check_defined(a, op);
  std::vector<double> out(a.numel());
  const auto& av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_op_tensor(op, a.shape(), std::move(out), {a.handle()},
                        [dfn](Node& self) {
                          Node& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                            pa.grad[i] +=
                                self.grad[i] * dfn(pa.data[i], self.data[i]);
                        });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      "softplus", a,
      [](double x) {
        if (x > 35.0) return x;
        if (x < -35.0) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

namespace {

void check_trailing_axis(const char* op, const Tensor& a, std::size_t axis) {
  if (a.shape().empty() || axis + 1 != a.shape().size())
    throw ShapeError(op, "axis " + std::to_string(axis) +
                             " must be the trailing axis of shape " +
                             shape_to_string(a.shape()));
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
  check_defined(a, "softmax");
  check_trailing_axis("softmax", a, axis);
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto& av = a.data();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    double mx = av[base];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, av[base + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[base + j] = std::exp(av[base + j] - mx);
      z += out[base + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[base + j] /= z;
  }
  return make_op_tensor(
      "softmax", a.shape(), std::move(out), {a.handle()},
      [rows, width](Node& self) {
        Node& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          double dot = 0.0;
          for (std::size_t j = 0; j < width; ++j)
            dot += self.grad[base + j] * self.data[base + j];
          for (std::size_t j = 0; j < width; ++j)
            pa.grad[base + j] +=
                self.data[base + j] * (self.grad[base + j] - dot);
        }
      });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  check_defined(a, "log_softmax");
  check_trailing_axis("log_softmax", a, axis);
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto& av = a.data();
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * width;
    double mx = av[base];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, av[base + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(av[base + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < width; ++j) out[base + j] = av[base + j] - lse;
  }
  return make_op_tensor(
      "log_softmax", a.shape(), std::move(out), {a.handle()},
      [rows, width](Node& self) {
        Node& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          double gsum = 0.0;
          for (std::size_t j = 0; j < width; ++j) gsum += self.grad[base + j];
          for (std::size_t j = 0; j < width; ++j)
            pa.grad[base + j] +=
                self.grad[base + j] - std::exp(self.data[base + j]) * gsum;
        }
      });
}

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_tensor("sum", {1}, {total}, {a.handle()}, [](Node& self) {
    Node& pa = *self.parents[0];
    pa.ensure_grad();
    for (double& g : pa.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  const double inv = 1.0 / static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_tensor("mean", {1}, {total * inv}, {a.handle()},
                        [inv](Node& self) {
                          Node& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (double& g : pa.grad) g += self.grad[0] * inv;
                        });
}

Tensor select(const Tensor& a, std::size_t index) {
  check_defined(a, "select");
  if (index >= a.numel())
    throw ShapeError("select", "index " + std::to_string(index) +
                                   " out of range for shape " +
                                   shape_to_string(a.shape()));
  return make_op_tensor("select", {1}, {a.data()[index]}, {a.handle()},
                        [index](Node& self) {
                          Node& pa = *self.parents[0];
                          pa.ensure_grad();
                          pa.grad[index] += self.grad[0];
                        });
}

Tensor column(const Tensor& a, std::size_t j) {
  check_defined(a, "column");
  if (a.shape().size() != 2 || j >= a.shape()[1])
    throw ShapeError("column", "column " + std::to_string(j) +
                                   " out of range for shape " +
                                   shape_to_string(a.shape()));
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i * m + j];
  return make_op_tensor("column", {n}, std::move(out), {a.handle()},
                        [j, n, m](Node& self) {
                          Node& pa = *self.parents[0];
                          pa.ensure_grad();
                          for (std::size_t i = 0; i < n; ++i)
                            pa.grad[i * m + j] += self.grad[i];
                        });
}

Tensor mul_rows(const Tensor& x, const Tensor& v) {
  check_defined(x, "mul_rows");
  check_defined(v, "mul_rows");
  if (x.shape().size() != 2 || v.shape().size() != 1 ||
      x.shape()[0] != v.shape()[0])
    throw_binary_mismatch("mul_rows", x.shape(), v.shape());
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  std::vector<double> out(n * f);
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = xv[i * f + j] * vv[i];
  return make_op_tensor(
      "mul_rows", x.shape(), std::move(out), {x.handle(), v.handle()},
      [n, f](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j)
              px.grad[i * f + j] += self.grad[i * f + j] * pv.data[i];
        }
        if (pv.requires_grad) {
          pv.ensure_grad();
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < f; ++j)
              acc += self.grad[i * f + j] * px.data[i * f + j];
            pv.grad[i] += acc;
          }
        }
      });
}

Tensor detach(const Tensor& a) { return a.detach(); }

}  // namespace gateshare
