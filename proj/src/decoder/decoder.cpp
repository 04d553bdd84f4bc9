#include "wsgic/decoder.hpp"

#include <cmath>

#include "wsgic/errors.hpp"

namespace wsgic {

void DecoderConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("decoder width must be divisible by the number of grounding heads");
  }
  if (vocab < 2) throw ConfigError("decoder needs a vocabulary");
  if (num_patches == 0 || max_len == 0 || ffn_mult == 0) throw ConfigError("zero-sized decoder");
  if (bos < 0 || eos < 0 || static_cast<std::size_t>(bos) >= vocab ||
      static_cast<std::size_t>(eos) >= vocab) {
    throw ConfigError("BOS/EOS ids outside the vocabulary");
  }
}

template <typename T>
AttentionState<T> AttentionState<T>::initial(std::size_t num_patches) {
  AttentionState s;
  s.s_star_sum = Tensor<T>::zeros({1, num_patches});
  return s;
}

template <typename T>
StepState<T> StepState<T>::initial(std::size_t dim, std::size_t num_patches) {
  return {Tensor<T>::zeros({1, dim}), Tensor<T>::zeros({1, dim}), Tensor<T>::zeros({1, dim}),
          AttentionState<T>::initial(num_patches)};
}

template <typename T>
Decoder<T>::Decoder(ParameterStore<T>& store, const DecoderConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  embed_ = Embedding<T>::make(store, "decoder.embed", config_.vocab, d, rng);
  lstm_ = LstmCell<T>::make(store, "decoder.lstm", 2 * d, d, rng);
  f_prev_ = Linear<T>::make(store, "decoder.rgm.f", config_.num_patches, d, rng);
  query_ = Linear<T>::make(store, "decoder.rgm.query", d, d, rng);
  key_ = Linear<T>::make(store, "decoder.rgm.key", d, d, rng);
  value_ = Linear<T>::make(store, "decoder.attn.value", d, d, rng);
  attn_out_ = Linear<T>::make(store, "decoder.attn.out", d, d, rng);
  glu_ = Glu<T>::make(store, "decoder.glu", d, rng);
  ffn_ = Ffn<T>::make(store, "decoder.ffn", d, config_.ffn_mult * d, rng);
  ln_ = LayerNorm<T>::make(store, "decoder.ln", d);
  logits_ = Linear<T>::make(store, "decoder.logits", d, config_.vocab, rng);
}

template <typename T>
VisualContext<T> Decoder<T>::prepare(const Tensor<T>& v, std::size_t prefix_rows) const {
  if (v.rank() != 2 || v.cols() != config_.dim || v.rows() != prefix_rows + config_.num_patches) {
    throw ShapeMismatch("decoder expects V of " + std::to_string(prefix_rows + config_.num_patches) +
                        "x" + std::to_string(config_.dim) + ", got " + shape_str(v.shape()));
  }
  return {v, mean_pool(v), key_(v), value_(v), prefix_rows};
}

template <typename T>
AttentionState<T> Decoder<T>::rgm_step(const Tensor<T>& h, const AttentionState<T>& prev,
                                       const VisualContext<T>& ctx) const {
  if (h.numel() != config_.dim || prev.s_star_sum.numel() != config_.num_patches) {
    throw ShapeMismatch("rgm_step: h " + shape_str(h.shape()) + ", s*_{t-1} " +
                        shape_str(prev.s_star_sum.shape()));
  }
  const auto u = config_.use_rgm ? add(h, f_prev_(prev.s_star_sum)) : h;
  const auto q = query_(u);
  const std::size_t dh = config_.dim / config_.heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::size_t rows = ctx.v.rows();

  AttentionState<T> out;
  for (std::size_t i = 0; i < config_.heads; ++i) {
    auto qi = slice_cols(q, i * dh, (i + 1) * dh);
    auto ki = slice_cols(ctx.keys, i * dh, (i + 1) * dh);
    auto s = softmax(scale(matmul_nt(qi, ki), inv_scale), 1);
    auto star = ctx.prefix_rows == 0 ? s : slice_cols(s, ctx.prefix_rows, rows);
    out.s_star_sum = out.s_star_sum ? add(out.s_star_sum, star) : star;
    out.s_full.push_back(std::move(s));
    out.s_star.push_back(std::move(star));
  }
  return out;
}

template <typename T>
WordStepOutput<T> Decoder<T>::language_step(int token, StepState<T>& state,
                                            const VisualContext<T>& ctx) const {
  if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab) {
    throw UnknownToken("token id " + std::to_string(token) + " outside vocabulary of " +
                       std::to_string(config_.vocab));
  }
  const int ids[1] = {token};
  auto x = concat<T>({add(ctx.v_mean, state.c_prev), embed_(ids)}, 1);
  auto lstm = lstm_(x, state.h, state.cell);

  WordStepOutput<T> out;
  out.attn = rgm_step(lstm.h, state.attn_prev, ctx);

  const std::size_t dh = config_.dim / config_.heads;
  std::vector<Tensor<T>> heads;
  heads.reserve(config_.heads);
  for (std::size_t i = 0; i < config_.heads; ++i) {
    heads.push_back(matmul(out.attn.s_full[i], slice_cols(ctx.values, i * dh, (i + 1) * dh)));
  }
  auto c_g = attn_out_(config_.heads == 1 ? heads[0] : concat(heads, 1));
  out.c = ln_(ffn_(glu_(add(lstm.h, c_g))));
  out.logits = logits_(out.c);

  state.h = lstm.h;
  state.cell = lstm.c;
  state.c_prev = out.c;
  state.attn_prev = out.attn;
  return out;
}

template <typename T>
std::vector<WordStepOutput<T>> Decoder<T>::teacher_force(const VisualContext<T>& ctx,
                                                         std::span<const int> inputs) const {
  auto state = StepState<T>::initial(config_.dim, config_.num_patches);
  std::vector<WordStepOutput<T>> outputs;
  outputs.reserve(inputs.size());
  for (int token : inputs) outputs.push_back(language_step(token, state, ctx));
  return outputs;
}

template <typename T>
int argmax(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

template <typename T>
DecodeResult Decoder<T>::greedy_decode(const VisualContext<T>& ctx, std::size_t max_len) const {
  NoGradGuard no_grad;
  DecodeResult result;
  auto state = StepState<T>::initial(config_.dim, config_.num_patches);
  int token = config_.bos;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto out = language_step(token, state, ctx);
    token = argmax<T>(out.logits.data());
    if (token == config_.eos) return result;
    result.tokens.push_back(token);
    auto s = out.attn.s_star_sum.data();
    result.attention.emplace_back(s.begin(), s.end());
  }
  result.truncated = true;
  return result;
}

#define WSGIC_INSTANTIATE(T)                        \
  template struct AttentionState<T>;                \
  template struct StepState<T>;                     \
  template class Decoder<T>;                        \
  template int argmax<T>(std::span<const T>);

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
