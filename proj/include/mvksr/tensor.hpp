// SPDX-License-Identifier: Apache-2.0
//
// Dense N-d tensor with a tape-free reverse-mode autodiff graph. Every op
// result holds shared ownership of its inputs, so the graph lives exactly as
// long as the tensors that reference it.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mvksr {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Arithmetic precision used inside the convolution GEMMs. Storage and all
/// elementwise math stay 64-bit; kFloat32 is the training/inference fast path.
enum class Precision { kFloat64, kFloat32 };

void set_compute_precision(Precision p);
Precision compute_precision();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::string op;            // producing op, for diagnostics
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  /// Dimension `i`; negative indices count from the back.
  int dim(int i) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access for initializers and optimizers. Mutating a tensor
  /// that already feeds a recorded graph invalidates that graph.
  std::span<double> data_mut() { return node_->data; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_mut() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values as a fresh leaf with no history.
  Tensor detach() const;
  /// Deep copy keeping requires_grad (no history).
  Tensor clone() const;

  const std::string& op() const { return node_->op; }
  bool is_same(const Tensor& other) const { return node_ == other.node_; }

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
/// interior gradients are rebuilt on every call.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result. The backward closure is recorded only when grad mode
/// is on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                   std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn);

/// Non-finite check on op outputs, active only when NDEBUG is not defined.
void debug_check_finite(const Node& node);

}  // namespace detail

}  // namespace mvksr
