// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "mvksr/error.hpp"
#include "mvksr/ops.hpp"

namespace mvksr {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
}

// Unary map with derivative expressed through input x and output y.
template <class F, class D>
Tensor unary(const Tensor& a, const char* name, F f, D dfdx) {
  std::vector<double> out(a.numel());
  const double* x = a.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return detail::make_result(a.shape(), std::move(out), name, {a},
                             [dfdx, in = a.node_ptr()](detail::Node& self) {
                               auto& gi = in->ensure_grad();
                               const double* x = in->data.data();
                               for (std::size_t i = 0; i < gi.size(); ++i)
                                 gi[i] += self.grad[i] * dfdx(x[i], self.data[i]);
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result(a.shape(), std::move(out), "add", {a, b},
                             [an = a.node_ptr(), bn = b.node_ptr()](detail::Node& self) {
                               for (auto* in : {an.get(), bn.get()}) {
                                 if (!in->requires_grad) continue;
                                 auto& g = in->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [an = a.node_ptr(), bn = b.node_ptr()](detail::Node& self) {
                               if (an->requires_grad) {
                                 auto& g = an->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                               }
                               if (bn->requires_grad) {
                                 auto& g = bn->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [an = a.node_ptr(), bn = b.node_ptr()](detail::Node& self) {
                               if (an->requires_grad) {
                                 auto& g = an->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[i] * bn->data[i];
                               }
                               if (bn->requires_grad) {
                                 auto& g = bn->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[i] * an->data[i];
                               }
                             });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return detail::make_result(a.shape(), std::move(out), "div", {a, b},
                             [an = a.node_ptr(), bn = b.node_ptr()](detail::Node& self) {
                               if (an->requires_grad) {
                                 auto& g = an->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] += self.grad[i] / bn->data[i];
                               }
                               if (bn->requires_grad) {
                                 auto& g = bn->ensure_grad();
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   g[i] -= self.grad[i] * self.data[i] / bn->data[i];
                               }
                             });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(a, "mul_scalar", [s](double x) { return x * s; },
               [s](double, double) { return s; });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  // Subgradient 0 at the kink.
  return unary(a, "abs", [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor pow_scalar(const Tensor& a, double p) {
  for (double x : a.data()) require(x > 0.0, "pow_scalar: base must be positive");
  return unary(a, "pow_scalar", [p](double x) { return std::pow(x, p); },
               [p](double x, double y) { return p * y / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(a, "clamp_min", [floor](double x) { return x > floor ? x : floor; },
               [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return detail::make_result({}, {acc}, "sum", {a}, [in = a.node_ptr()](detail::Node& self) {
    auto& g = in->ensure_grad();
    const double go = self.grad[0];
    for (double& v : g) v += go;
  });
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, "mean of an empty tensor");
  // Divide rather than scale by 1/n so that a mean of equal values is exact.
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return detail::make_result({}, {acc / n}, "mean", {a}, [in = a.node_ptr(), n](detail::Node& self) {
    auto& g = in->ensure_grad();
    const double go = self.grad[0] / n;
    for (double& v : g) v += go;
  });
}

}  // namespace mvksr
