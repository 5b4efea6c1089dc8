// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mvksr/tensor.hpp"

namespace mvksr {

/// Named trainable tensors, iterated in lexicographic name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  /// Inserts a new parameter; duplicate names are rejected.
  void add(const std::string& name, Tensor t);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return map_.contains(name); }
  void erase(const std::string& name) { map_.erase(name); }

  std::size_t size() const { return map_.size(); }
  /// Total number of scalars across all tensors.
  std::size_t scalar_count() const;
  void zero_grad();
  /// Deep copy of every tensor.
  ParamSet clone() const;

  Map::const_iterator begin() const { return map_.begin(); }
  Map::const_iterator end() const { return map_.end(); }
  Map::iterator begin() { return map_.begin(); }
  Map::iterator end() { return map_.end(); }

 private:
  Map map_;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update over every parameter, then clears grads.
/// A parameter without a gradient is an error naming it.
void adam_step(ParamSet& params, AdamState& state);

}  // namespace mvksr
