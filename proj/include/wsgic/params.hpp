#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "wsgic/tensor.hpp"

namespace wsgic {

using Rng = std::mt19937_64;

enum class Init {
  Zeros,
  Ones,
  XavierUniform,  // U(-a, a), a = sqrt(6 / (fan_in + fan_out)) over the last two extents
  Normal02,       // N(0, 0.02^2)
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

// Owns every named parameter of a model. Iteration is name-sorted, which is
// also the on-disk checkpoint order.
template <typename T>
class ParameterStore {
 public:
  Tensor<T> create(const std::string& name, Shape shape, Init init, Rng& rng);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter<T>& at(const std::string& name);
  const Parameter<T>& at(const std::string& name) const;

  // Frozen parameters stop receiving gradients.
  void set_trainable(const std::string& name, bool trainable);

  void zero_grad();
  std::size_t total_size() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  // Flat copy of every parameter value in name order (used for trajectory
  // comparisons).
  std::vector<T> flatten() const;

 private:
  std::map<std::string, Parameter<T>> params_;
};

}  // namespace wsgic
