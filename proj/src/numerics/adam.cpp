#include "wsgic/adam.hpp"

#include <cmath>

#include "wsgic/errors.hpp"

namespace wsgic {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t step, const AdamOptions& opt) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeMismatch("adam: parameter, gradient and moment sizes disagree");
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(m[i]) / c1;
    const double v_hat = static_cast<double>(v[i]) / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) -
                              opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps));
  }
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, const AdamOptions& opt) {
  ++state.step;
  for (auto& [name, p] : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    const std::size_t n = p.tensor.numel();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(n, T(0));
    if (v.empty()) v.assign(n, T(0));
    adam_update<T>(p.tensor.mutable_data(), p.tensor.grad(), m, v, state.step, opt);
  }
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [_, p] : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [_, p] : params) {
      if (!p.tensor.has_grad()) continue;
      for (T& g : p.tensor.node()->grad) g *= factor;
    }
  }
  return norm;
}

#define WSGIC_INSTANTIATE(T)                                                                 \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>, \
                               std::int64_t, const AdamOptions&);                            \
  template void adam_step<T>(ParameterStore<T>&, AdamState<T>&, const AdamOptions&);         \
  template double clip_grad_norm<T>(ParameterStore<T>&, double);

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
