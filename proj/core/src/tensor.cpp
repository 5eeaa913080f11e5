#include "dbda/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace dbda {

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += "]";
  return s;
}

namespace {

void check_shape_positive(const Shape& shape) {
  for (int64_t d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor shape " + shape_str(shape) + " has a non-positive dimension");
    }
  }
}

std::shared_ptr<detail::Node> make_leaf(const char* op, Shape shape,
                                        std::vector<double> values, bool requires_grad) {
  check_shape_positive(shape);
  if (shape_size(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(shape) + " expects " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf("constant", std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_leaf("parameter", std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape_positive(shape);
  std::vector<double> values(static_cast<size_t>(shape_size(shape)), value);
  return Tensor(make_leaf(requires_grad ? "parameter" : "constant", std::move(shape),
                          std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("operation on an empty tensor");
  return node_->shape;
}

int64_t Tensor::size() const { return shape_size(shape()); }

bool Tensor::requires_grad() const {
  if (!node_) throw Error("operation on an empty tensor");
  return node_->requires_grad;
}

const std::string& Tensor::op() const {
  if (!node_) throw Error("operation on an empty tensor");
  return node_->op;
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw Error("operation on an empty tensor");
  return node_->values;
}

std::vector<double>& Tensor::values_mut() {
  if (!node_) throw Error("operation on an empty tensor");
  if (node_->backward || !node_->parents.empty()) {
    throw Error("values_mut on op result '" + node_->op + "': only leaf tensors are mutable");
  }
  return node_->values;
}

double Tensor::item() const {
  const auto& v = values();
  if (v.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(node_->shape));
  }
  return v[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw Error("operation on an empty tensor");
  return node_->grad;
}

bool Tensor::has_grad() const {
  if (!node_) throw Error("operation on an empty tensor");
  return !node_->grad.empty();
}

void Tensor::zero_grad() const {
  if (!node_) throw Error("operation on an empty tensor");
  node_->grad.clear();
}

std::vector<double>& OpCtx::parent_grad(size_t i) {
  detail::Node* p = node_->parents[i].get();
  if (p->grad.empty()) {
    p->grad.assign(p->values.size(), 0.0);
  }
  return p->grad;
}

void Tensor::backward() const {
  if (!node_) throw Error("backward on an empty tensor");
  if (shape_size(node_->shape) != 1) {
    throw ShapeError("backward requires a single-element tensor, got shape " +
                     shape_str(node_->shape));
  }

  // Post-order DFS, skipping subgraphs that need no gradient; reversing the
  // order yields a topological order with consumers before producers.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  visited.insert(node_.get());
  stack.emplace_back(node_.get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    OpCtx ctx(node);
    node->backward(ctx);
  }
}

Tensor make_op(std::string op, std::vector<Tensor> parents, Shape out_shape,
               std::vector<double> out_values, BackwardFn backward) {
  check_shape_positive(out_shape);
  if (shape_size(out_shape) != static_cast<int64_t>(out_values.size())) {
    throw ShapeError(op + ": output shape " + shape_str(out_shape) + " expects " +
                     std::to_string(shape_size(out_shape)) + " values, got " +
                     std::to_string(out_values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->op = std::move(op);
  node->shape = std::move(out_shape);
  node->values = std::move(out_values);
  node->parents.reserve(parents.size());
  for (const Tensor& p : parents) {
    if (!p.defined()) throw Error(node->op + ": undefined input tensor");
    node->parents.push_back(p.node_);
    node->requires_grad = node->requires_grad || p.node_->requires_grad;
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return Tensor(std::move(node));
}

}  // namespace dbda
