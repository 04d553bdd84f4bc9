#include "wsgic/params.hpp"

#include <cmath>

#include "wsgic/errors.hpp"

namespace wsgic {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init, Rng& rng) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  const std::size_t n = shape_numel(shape);
  std::vector<T> values(n, T(0));
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::XavierUniform: {
      const double fan_out = static_cast<double>(shape.back());
      const double fan_in = shape.size() >= 2 ? static_cast<double>(shape[shape.size() - 2]) : 1.0;
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-a, a);
      for (auto& v : values) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::Normal02: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto& v : values) v = static_cast<T>(dist(rng));
      break;
    }
  }
  auto tensor = Tensor<T>::from(std::move(shape), std::move(values), true);
  params_.emplace(name, Parameter<T>{name, tensor, true});
  return tensor;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::string& name, bool trainable) {
  auto& p = at(name);
  p.trainable = trainable;
  p.tensor.set_requires_grad(trainable);
  if (!trainable) p.tensor.zero_grad();
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, p] : params_) p.tensor.zero_grad();
}

template <typename T>
std::size_t ParameterStore<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

template <typename T>
std::vector<T> ParameterStore<T>::flatten() const {
  std::vector<T> out;
  out.reserve(total_size());
  for (const auto& [_, p] : params_) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace wsgic
