// SPDX-License-Identifier: Apache-2.0
#include "mvksr/params.hpp"

#include <cmath>

#include "mvksr/error.hpp"

namespace mvksr {

void ParamSet::add(const std::string& name, Tensor t) {
  require(t.defined(), "ParamSet: undefined tensor for '" + name + "'");
  auto [it, inserted] = map_.emplace(name, std::move(t));
  require(inserted, "ParamSet: duplicate parameter name '" + name + "'");
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = map_.find(name);
  require(it != map_.end(), "ParamSet: no parameter named '" + name + "'");
  return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = map_.find(name);
  require(it != map_.end(), "ParamSet: no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : map_) n += t.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [name, t] : map_) t.zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : map_) out.map_.emplace(name, t.clone());
  return out;
}

void adam_step(ParamSet& params, AdamState& state) {
  for (const auto& [name, t] : params)
    if (!t.has_grad()) fail(ErrorCode::kInvalidArgument, "adam_step: parameter '" + name + "' has no gradient");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.numel()) m.assign(t.numel(), 0.0);
    if (v.size() != t.numel()) v.assign(t.numel(), 0.0);
    auto w = t.data_mut();
    auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    t.zero_grad();
  }
}

}  // namespace mvksr
