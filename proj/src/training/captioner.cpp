#include <algorithm>
#include <cmath>

#include "wsgic/errors.hpp"
#include "wsgic/training.hpp"

namespace wsgic {

DecoderConfig ModelConfig::decoder(std::size_t vocab) const {
  DecoderConfig d;
  d.dim = encoder.dim;
  d.vocab = vocab;
  d.heads = decoder_heads;
  d.max_len = max_len;
  d.ffn_mult = decoder_ffn_mult;
  d.num_patches = encoder.num_patches();
  d.use_rgm = use_rgm;
  d.bos = Vocabulary::kBos;
  d.eos = Vocabulary::kEos;
  return d;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (decoder_heads == 0 || encoder.dim % decoder_heads != 0) {
    throw ConfigError("dim " + std::to_string(encoder.dim) + " is not divisible by " +
                      std::to_string(decoder_heads) + " grounding heads");
  }
  if (max_len == 0 || decoder_ffn_mult == 0) throw ConfigError("max_len and ffn_mult must be positive");
}

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(anneal > 0.0 && anneal <= 1.0)) throw ConfigError("anneal must lie in (0, 1]");
  if (anneal_every == 0) throw ConfigError("anneal_every must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  return config.lr * std::pow(config.anneal, static_cast<double>(epoch / config.anneal_every));
}

template <typename T>
Tensor<T> loss_mlc(const Tensor<T>& logits, std::span<const T> targets) {
  if (logits.numel() != targets.size()) {
    throw ShapeMismatch("relation loss: " + std::to_string(logits.numel()) + " logits vs " +
                        std::to_string(targets.size()) + " labels");
  }
  return sigmoid_bce(logits, targets);
}

template <typename T>
Tensor<T> loss_xe(const std::vector<Tensor<T>>& step_logits, std::span<const int> targets,
                  int pad_id) {
  if (step_logits.size() != targets.size()) {
    throw LengthMismatch("caption loss: " + std::to_string(step_logits.size()) +
                         " decoder steps vs " + std::to_string(targets.size()) + " targets");
  }
  if (step_logits.empty()) throw LengthMismatch("caption loss over an empty caption");
  auto stacked = step_logits.size() == 1 ? step_logits[0] : concat(step_logits, 0);
  return cross_entropy_from_logits(stacked, targets, pad_id);
}

template <typename T>
std::vector<T> relation_targets(std::span<const int> ids, std::size_t num_classes) {
  std::vector<T> out(num_classes, T(0));
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= num_classes) {
      throw ShapeMismatch("relation id " + std::to_string(id) + " outside " +
                          std::to_string(num_classes) + " classes");
    }
    out[static_cast<std::size_t>(id)] = T(1);
  }
  return out;
}

template <typename T>
Captioner<T>::Captioner(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed)
    : config_((config.validate(), config)),
      vocab_size_(vocab_size),
      init_rng_(seed),
      encoder_(store_, config_.encoder, init_rng_),
      decoder_(store_, config_.decoder(vocab_size), init_rng_) {}

template <typename T>
EncoderOutput<T> Captioner<T>::encode(const Image& image) const {
  const auto& e = config_.encoder;
  if (image.height != e.image_height || image.width != e.image_width) {
    throw BadDimensions("model expects " + std::to_string(e.image_height) + "x" +
                        std::to_string(e.image_width) + " images, got " +
                        std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  return encoder_.forward(patchify<T>(image, e.patch), config_.tokens());
}

template <typename T>
CaptionerLosses<T> Captioner<T>::losses(const Image& image, std::span<const int> caption,
                                        std::span<const T> relation_targets) const {
  auto enc = encode(image);
  auto ctx = decoder_.prepare(enc.v, enc.prefix_rows);
  std::vector<int> inputs;
  inputs.reserve(caption.size() + 1);
  inputs.push_back(Vocabulary::kBos);
  inputs.insert(inputs.end(), caption.begin(), caption.end());
  std::vector<int> targets(caption.begin(), caption.end());
  targets.push_back(Vocabulary::kEos);

  auto steps = decoder_.teacher_force(ctx, inputs);
  std::vector<Tensor<T>> logits;
  logits.reserve(steps.size());
  for (auto& s : steps) logits.push_back(std::move(s.logits));

  CaptionerLosses<T> out;
  out.xe = loss_xe(logits, targets, Vocabulary::kPad);
  if (config_.use_rel) {
    out.mlc = loss_mlc(enc.relation_logits, relation_targets);
    out.total = add(out.xe, out.mlc);
  } else {
    out.mlc = Tensor<T>::scalar(T(0));
    out.total = out.xe;
  }
  return out;
}

template <typename T>
CaptionPrediction Captioner<T>::predict(const Image& image, const Vocabulary& vocab,
                                        const EvalOptions& options) const {
  NoGradGuard no_grad;
  auto enc = encode(image);
  auto ctx = decoder_.prepare(enc.v, enc.prefix_rows);
  auto decoded = decoder_.greedy_decode(ctx, config_.max_len);

  CaptionPrediction out;
  out.tokens = decoded.tokens;
  out.truncated = decoded.truncated;
  out.attention = std::move(decoded.attention);
  out.words = vocab.decode(out.tokens);
  if (enc.relation_logits) {
    for (T x : enc.relation_logits.data()) out.relation_scores.push_back(1.0 / (1.0 + std::exp(-double(x))));
  }
  const auto& e = config_.encoder;
  for (std::size_t t = 0; t < out.words.size(); ++t) {
    const auto& w = out.words[t];
    if (std::find(options.groundable_words.begin(), options.groundable_words.end(), w) ==
        options.groundable_words.end()) {
      continue;
    }
    const auto& s = out.attention[t];
    auto g = ground_word(s, e.grid_rows(), e.grid_cols(), e.patch, options.rho);
    g.vlam.word_index = t;
    out.grounded.push_back({t, w, g.box, *std::max_element(s.begin(), s.end()), std::move(g.vlam)});
  }
  return out;
}

#define WSGIC_INSTANTIATE(T)                                                                   \
  template Tensor<T> loss_mlc<T>(const Tensor<T>&, std::span<const T>);                        \
  template Tensor<T> loss_xe<T>(const std::vector<Tensor<T>>&, std::span<const int>, int);     \
  template std::vector<T> relation_targets<T>(std::span<const int>, std::size_t);              \
  template class Captioner<T>;

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
