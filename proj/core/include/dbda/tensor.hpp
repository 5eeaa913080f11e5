#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dbda/error.hpp"

namespace dbda {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class OpCtx;
using BackwardFn = std::function<void(OpCtx&)>;

namespace detail {

struct Node {
  std::string op;
  Shape shape;
  std::vector<double> values;
  // Lazily allocated: empty means no gradient has reached this node yet.
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  bool requires_grad = false;
};

}  // namespace detail

// Dense 64-bit real array; op results keep back-edges to their inputs so a
// scalar result can be differentiated with backward(). Handles share the
// underlying node; copying a Tensor never copies data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t size() const;
  bool requires_grad() const;
  const std::string& op() const;

  const std::vector<double>& values() const;
  // Leaf tensors only: op results are immutable once created.
  std::vector<double>& values_mut();
  // Single-element tensors only.
  double item() const;

  // Empty until a backward pass has accumulated into this node.
  const std::vector<double>& grad() const;
  bool has_grad() const;
  // Gradient buffers are scratch state, so clearing one is a const operation
  // on the handle.
  void zero_grad() const;

  // Reverse-mode sweep from a single-element tensor. Gradients accumulate
  // into every reachable node with requires_grad set. Deterministic: the
  // visit order depends only on graph structure.
  void backward() const;

  // Stable identity of the underlying node.
  const void* id() const { return node_.get(); }

  friend Tensor make_op(std::string op, std::vector<Tensor> parents, Shape out_shape,
                        std::vector<double> out_values, BackwardFn backward);
  friend class OpCtx;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// View handed to backward functions: output values/grad plus per-parent
// access. parent_grad() allocates the buffer zero-filled on first touch.
class OpCtx {
 public:
  explicit OpCtx(detail::Node* node) : node_(node) {}

  const std::vector<double>& out_values() const { return node_->values; }
  const std::vector<double>& out_grad() const { return node_->grad; }
  const Shape& out_shape() const { return node_->shape; }

  size_t num_parents() const { return node_->parents.size(); }
  const Shape& parent_shape(size_t i) const { return node_->parents[i]->shape; }
  const std::vector<double>& parent_values(size_t i) const { return node_->parents[i]->values; }
  bool parent_needs_grad(size_t i) const { return node_->parents[i]->requires_grad; }
  std::vector<double>& parent_grad(size_t i);

 private:
  detail::Node* node_;
};

// Registers a new op node. backward may be empty for non-differentiable
// results; it receives an OpCtx for this node.
Tensor make_op(std::string op, std::vector<Tensor> parents, Shape out_shape,
               std::vector<double> out_values, BackwardFn backward);

// Elementwise; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// b must have a's shape or be a single element (applied to every entry).
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);
// Natural log; input must be strictly positive.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);

// a: m×k, b: k×n -> m×n.
Tensor matmul(const Tensor& a, const Tensor& b);

// input B×Cin×H×W, kernel Cout×Cin×k×k with k odd, zero "same" padding so the
// spatial size is preserved for any dilation >= 1. bias (optional) is a
// Cout-vector added to each output channel.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int64_t dilation = 1);
Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t dilation = 1);

// 2x2 mean pooling, stride 2; H and W must be even.
Tensor avg_pool2(const Tensor& input);
// Nearest-neighbor 2x upsampling.
Tensor upsample_nearest2(const Tensor& input);

// Softmax over the channel dimension of B×C×H×W, max-subtracted for
// stability; every channel slice sums to 1.
Tensor softmax_channel(const Tensor& input);

// Sum of all entries -> single-element tensor.
Tensor sum(const Tensor& a);
// Per-channel sums of B×C×H×W over batch and space -> C-vector.
Tensor channel_sum(const Tensor& input);

// out[i] = t.flat[flat_indices[i]]; gradient scatters back (duplicates
// accumulate). Indices must be within [0, t.size()).
Tensor gather(const Tensor& t, std::vector<int64_t> flat_indices);

}  // namespace dbda
