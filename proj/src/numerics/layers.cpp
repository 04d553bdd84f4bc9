#include "wsgic/layers.hpp"

#include "wsgic/errors.hpp"

namespace wsgic {

template <typename T>
Linear<T> Linear<T>::make(ParameterStore<T>& store, const std::string& name, std::size_t in,
                          std::size_t out, Rng& rng, bool with_bias, Init init) {
  Linear layer;
  layer.weight = store.create(name + ".weight", {in, out}, init, rng);
  if (with_bias) layer.bias = store.create(name + ".bias", {out}, Init::Zeros, rng);
  return layer;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  auto y = matmul(x, weight);
  return bias ? add(y, bias) : y;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::make(ParameterStore<T>& store, const std::string& name,
                                std::size_t dim) {
  Rng unused;
  return {store.create(name + ".gain", {dim}, Init::Ones, unused),
          store.create(name + ".bias", {dim}, Init::Zeros, unused)};
}

template <typename T>
Ffn<T> Ffn<T>::make(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                    std::size_t hidden, Rng& rng) {
  return {Linear<T>::make(store, name + ".fc1", dim, hidden, rng),
          Linear<T>::make(store, name + ".fc2", hidden, dim, rng)};
}

template <typename T>
Glu<T> Glu<T>::make(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                    Rng& rng) {
  return {Linear<T>::make(store, name + ".value", dim, dim, rng),
          Linear<T>::make(store, name + ".gate", dim, dim, rng)};
}

template <typename T>
LstmCell<T> LstmCell<T>::make(ParameterStore<T>& store, const std::string& name, std::size_t in,
                              std::size_t hidden, Rng& rng) {
  static constexpr const char* kGateNames[4] = {"i", "f", "g", "o"};
  LstmCell cell;
  for (int k = 0; k < 4; ++k) {
    const std::string gate = kGateNames[k];
    cell.w[k] = store.create(name + ".w_" + gate, {in, hidden}, Init::XavierUniform, rng);
    cell.u[k] = store.create(name + ".u_" + gate, {hidden, hidden}, Init::XavierUniform, rng);
    cell.b[k] = store.create(name + ".b_" + gate, {hidden}, Init::Zeros, rng);
  }
  return cell;
}

template <typename T>
LstmState<T> LstmCell<T>::operator()(const Tensor<T>& x, const Tensor<T>& h_prev,
                                     const Tensor<T>& c_prev) const {
  if (x.cols() != in_features() || h_prev.cols() != hidden() || c_prev.cols() != hidden() ||
      x.rows() != h_prev.rows() || c_prev.rows() != h_prev.rows()) {
    throw ShapeMismatch("lstm_cell: x " + shape_str(x.shape()) + ", h " +
                        shape_str(h_prev.shape()) + ", c " + shape_str(c_prev.shape()));
  }
  auto pre = [&](int k) { return add(add(matmul(x, w[k]), matmul(h_prev, u[k])), b[k]); };
  auto i = sigmoid(pre(kInput));
  auto f = sigmoid(pre(kForget));
  auto g = tanh(pre(kCell));
  auto o = sigmoid(pre(kOutput));
  auto c = add(mul(f, c_prev), mul(i, g));
  auto h = mul(o, tanh(c));
  return {h, c};
}

template <typename T>
Embedding<T> Embedding<T>::make(ParameterStore<T>& store, const std::string& name,
                                std::size_t vocab, std::size_t dim, Rng& rng) {
  return {store.create(name + ".table", {vocab, dim}, Init::XavierUniform, rng)};
}

#define WSGIC_INSTANTIATE(T)   \
  template struct Linear<T>;    \
  template struct LayerNorm<T>; \
  template struct Ffn<T>;       \
  template struct Glu<T>;       \
  template struct LstmCell<T>;  \
  template struct Embedding<T>;

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
