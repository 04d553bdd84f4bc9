#pragma once

// Parameterised building blocks composed from the primitives in ops.hpp.
// Each block registers its parameters in a ParameterStore under a dotted
// name prefix and keeps handles to them.

#include <array>
#include <span>
#include <string>

#include "wsgic/ops.hpp"
#include "wsgic/params.hpp"

namespace wsgic {

// y = x W + b with W stored [in x out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;  // empty when built without bias

  static Linear make(ParameterStore<T>& store, const std::string& name, std::size_t in,
                     std::size_t out, Rng& rng, bool with_bias = true,
                     Init init = Init::XavierUniform);

  Tensor<T> operator()(const Tensor<T>& x) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNorm make(ParameterStore<T>& store, const std::string& name, std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

// Position-wise feed-forward: fc2(relu(fc1(x))).
template <typename T>
struct Ffn {
  Linear<T> fc1;
  Linear<T> fc2;

  static Ffn make(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                  std::size_t hidden, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(relu(fc1(x))); }
};

// Gated linear unit: (W_a x + b_a) * sigmoid(W_b x + b_b), dimension preserving.
template <typename T>
struct Glu {
  Linear<T> value;
  Linear<T> gate;

  static Glu make(ParameterStore<T>& store, const std::string& name, std::size_t dim, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return mul(value(x), sigmoid(gate(x))); }
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

// Standard LSTM cell with separate input (W) and recurrent (U) matrices per
// gate, gate order i, f, g, o.
template <typename T>
struct LstmCell {
  enum Gate { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };
  std::array<Tensor<T>, 4> w;  // [in x hidden]
  std::array<Tensor<T>, 4> u;  // [hidden x hidden]
  std::array<Tensor<T>, 4> b;  // [hidden]

  static LstmCell make(ParameterStore<T>& store, const std::string& name, std::size_t in,
                       std::size_t hidden, Rng& rng);

  LstmState<T> operator()(const Tensor<T>& x, const Tensor<T>& h_prev,
                          const Tensor<T>& c_prev) const;
  std::size_t in_features() const { return w[0].shape()[0]; }
  std::size_t hidden() const { return w[0].shape()[1]; }
};

template <typename T>
struct Embedding {
  Tensor<T> table;  // [vocab x dim]

  static Embedding make(ParameterStore<T>& store, const std::string& name, std::size_t vocab,
                        std::size_t dim, Rng& rng);
  Tensor<T> operator()(std::span<const int> ids) const { return embedding_lookup(table, ids); }
  std::size_t vocab() const { return table.shape()[0]; }
};

}  // namespace wsgic
