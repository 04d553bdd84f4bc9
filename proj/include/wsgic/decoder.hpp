#pragma once

// Grounded language decoder. Each step runs the LSTM language module and the
// recurrent grounding module (RGM):
//
//   h_t   = LSTM([mean(V) + c_{t-1} ; E[y_{t-1}]], h_{t-1})
//   u_t   = h_t + f(sum_heads s*_{t-1})                      (f off in GM mode)
//   s_t,i = softmax(q_i(u_t) K_i(V)^T / sqrt(d / N_h))       per head i
//   s*_t,i = s_t,i without the [REL]/[CLS] prefix entries
//   c^g_t = W_o [s_t,1 V_1(V) ; ... ; s_t,N_h V_N_h(V)]
//   c_t   = LN(FFN(GLU(h_t + c^g_t)))
//   logits = W_y c_t + b_y
//
// The per-word grounding signal is sum_heads s*_t, one weight per patch.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wsgic/layers.hpp"

namespace wsgic {

struct DecoderConfig {
  std::size_t dim = 64;          // d
  std::size_t vocab = 0;         // |Sigma|
  std::size_t heads = 4;         // N_h
  std::size_t max_len = 16;      // L_max
  std::size_t ffn_mult = 4;
  std::size_t num_patches = 64;  // N
  bool use_rgm = true;           // false: plain GM, no f(s*_{t-1}) term
  int bos = 0;
  int eos = 1;

  void validate() const;
};

template <typename T>
struct AttentionState {
  std::vector<Tensor<T>> s_full;  // per head, [1 x (prefix + N)], post-softmax
  std::vector<Tensor<T>> s_star;  // per head, [1 x N]
  Tensor<T> s_star_sum;           // [1 x N]

  // The t = 0 state: no heads, s_star_sum all zeros.
  static AttentionState initial(std::size_t num_patches);
};

// Per-image quantities reused by every step.
template <typename T>
struct VisualContext {
  Tensor<T> v;       // [(prefix + N) x d]
  Tensor<T> v_mean;  // [1 x d]
  Tensor<T> keys;    // [(prefix + N) x d], heads side by side
  Tensor<T> values;  // [(prefix + N) x d], heads side by side
  std::size_t prefix_rows = 0;
};

template <typename T>
struct StepState {
  Tensor<T> h;       // [1 x d]
  Tensor<T> cell;    // [1 x d]
  Tensor<T> c_prev;  // [1 x d], previous caption representation
  AttentionState<T> attn_prev;

  static StepState initial(std::size_t dim, std::size_t num_patches);
};

template <typename T>
struct WordStepOutput {
  Tensor<T> logits;  // [1 x vocab]
  Tensor<T> c;       // [1 x d]
  AttentionState<T> attn;
};

struct DecodeResult {
  std::vector<int> tokens;                     // without BOS/EOS
  std::vector<std::vector<double>> attention;  // s_star_sum per token
  bool truncated = false;                      // hit max_len before EOS
};

template <typename T>
class Decoder {
 public:
  Decoder(ParameterStore<T>& store, const DecoderConfig& config, Rng& rng);

  VisualContext<T> prepare(const Tensor<T>& v, std::size_t prefix_rows) const;

  AttentionState<T> rgm_step(const Tensor<T>& h, const AttentionState<T>& prev,
                             const VisualContext<T>& ctx) const;

  WordStepOutput<T> language_step(int token, StepState<T>& state,
                                  const VisualContext<T>& ctx) const;

  // One output per input token, inputs usually [BOS, y_1, ..., y_{T-1}].
  std::vector<WordStepOutput<T>> teacher_force(const VisualContext<T>& ctx,
                                               std::span<const int> inputs) const;

  // Argmax decoding from BOS; ties go to the smallest token id. Runs without
  // recording a graph.
  DecodeResult greedy_decode(const VisualContext<T>& ctx, std::size_t max_len) const;

  const DecoderConfig& config() const { return config_; }

 private:
  DecoderConfig config_;
  Embedding<T> embed_;
  LstmCell<T> lstm_;
  Linear<T> f_prev_;
  Linear<T> query_;
  Linear<T> key_;
  Linear<T> value_;
  Linear<T> attn_out_;
  Glu<T> glu_;
  Ffn<T> ffn_;
  LayerNorm<T> ln_;
  Linear<T> logits_;
};

// Smallest index among the maxima.
template <typename T>
int argmax(std::span<const T> values);

}  // namespace wsgic
