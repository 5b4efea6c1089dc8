// SPDX-License-Identifier: Apache-2.0
#include "mvksr/tensor.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mvksr/error.hpp"

namespace mvksr {

namespace {

std::atomic<Precision> g_precision{Precision::kFloat64};
thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 0, "negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void set_compute_precision(Precision p) { g_precision.store(p); }
Precision compute_precision() { return g_precision.load(); }

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void debug_check_finite([[maybe_unused]] const Node& node) {
#ifndef NDEBUG
  for (const auto& in : node.inputs) {
    for (double x : in->data)
      if (!std::isfinite(x)) return;  // garbage in, no assertion
  }
  for (double x : node.data) assert(std::isfinite(x) && "non-finite op output");
#endif
}

Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  require(mvksr::numel(shape) == data.size(),
          op + ": data length does not match shape " + to_string(shape));
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = std::move(op);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (auto& t : inputs)
      if (t.defined()) node->inputs.push_back(t.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  debug_check_finite(*node);
  return Tensor::wrap(std::move(node));
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  require(mvksr::numel(shape) == data.size(),
          "tensor data length " + std::to_string(data.size()) +
              " does not match shape " + to_string(shape));
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->op = "leaf";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = mvksr::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  require(defined(), "use of an undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const {
  const int r = rank();
  const int j = i < 0 ? r + i : i;
  require(j >= 0 && j < r, "dimension index " + std::to_string(i) +
                               " out of range for shape " + to_string(shape()));
  return node_->shape[static_cast<std::size_t>(j)];
}

double Tensor::item() const {
  require(numel() == 1, "item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::clone() const {
  return Tensor(shape(), node_->data, node_->requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1,
          "backward requires a scalar loss, got shape " +
              (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  loss.node().ensure_grad()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf()) continue;
    n->backward_fn(*n);
    // Interior grads are not part of the contract; free them early.
    if (n != &loss.node()) std::vector<double>().swap(n->grad);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace mvksr
