#include "wsgic/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "wsgic/errors.hpp"

namespace wsgic {

void EncoderConfig::validate() const {
  if (patch == 0 || image_height == 0 || image_width == 0) {
    throw BadDimensions("image size and patch size must be positive");
  }
  if (image_height % patch != 0 || image_width % patch != 0) {
    throw BadDimensions("image " + std::to_string(image_height) + "x" +
                        std::to_string(image_width) + " is not a multiple of patch " +
                        std::to_string(patch));
  }
  if (heads == 0 || dim_backbone % heads != 0) {
    throw ConfigError("backbone width must be divisible by the head count");
  }
  if (layers < 1) throw ConfigError("backbone needs at least one layer");
  if (rel_layers < 1) throw ConfigError("relation branch needs at least one layer");
  if (dim == 0 || num_relations == 0 || ffn_mult == 0) throw ConfigError("zero-sized encoder");
  if (pos_init != "zeros" && pos_init != "sincos") {
    throw ConfigError("pos_init must be zeros or sincos, got " + pos_init);
  }
  if (pos_init == "sincos" && dim_backbone % 4 != 0) {
    throw ConfigError("sincos positions need a backbone width divisible by 4");
  }
}

template <typename T>
std::vector<T> sincos_position_table(std::size_t grid_rows, std::size_t grid_cols, std::size_t dim) {
  const std::size_t half = dim / 2, quarter = dim / 4;
  std::vector<T> table((grid_rows * grid_cols + 1) * dim, T(0));
  auto fill = [&](T* out, double pos) {
    for (std::size_t k = 0; k < quarter; ++k) {
      const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
      out[k] = static_cast<T>(std::sin(pos * omega));
      out[quarter + k] = static_cast<T>(std::cos(pos * omega));
    }
  };
  for (std::size_t r = 0; r < grid_rows; ++r) {
    for (std::size_t c = 0; c < grid_cols; ++c) {
      T* row = table.data() + (1 + r * grid_cols + c) * dim;
      fill(row, static_cast<double>(r));
      fill(row + half, static_cast<double>(c));
    }
  }
  return table;
}

template <typename T>
Tensor<T> patchify(const Image& image, std::size_t patch) {
  if (patch == 0 || image.height == 0 || image.width == 0 || image.height % patch != 0 ||
      image.width % patch != 0) {
    throw BadDimensions("cannot split " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " image into " + std::to_string(patch) +
                        "-pixel patches");
  }
  const std::size_t gr = image.height / patch, gc = image.width / patch;
  const std::size_t row_len = 3 * patch * patch;
  std::vector<T> out(gr * gc * row_len);
  std::size_t k = 0;
  for (std::size_t r = 0; r < gr; ++r) {
    for (std::size_t c = 0; c < gc; ++c) {
      for (std::size_t py = 0; py < patch; ++py) {
        for (std::size_t px = 0; px < patch; ++px) {
          for (std::size_t ch = 0; ch < 3; ++ch) {
            out[k++] = static_cast<T>(image.at(r * patch + py, c * patch + px, ch));
          }
        }
      }
    }
  }
  return Tensor<T>::from({gr * gc, row_len}, std::move(out));
}

Image unpatchify(std::span<const float> rows, std::size_t height, std::size_t width,
                 std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0 || rows.size() != height * width * 3) {
    throw BadDimensions("unpatchify: inconsistent dimensions");
  }
  Image img(height, width);
  const std::size_t gc = width / patch;
  std::size_t k = 0;
  for (std::size_t r = 0; r < height / patch; ++r) {
    for (std::size_t c = 0; c < gc; ++c) {
      for (std::size_t py = 0; py < patch; ++py) {
        for (std::size_t px = 0; px < patch; ++px) {
          for (std::size_t ch = 0; ch < 3; ++ch) img.at(r * patch + py, c * patch + px, ch) = rows[k++];
        }
      }
    }
  }
  return img;
}

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const Linear<T>& qkv,
                                    const Linear<T>& proj, std::size_t heads) {
  const std::size_t dim = x.cols();
  const std::size_t dh = dim / heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  auto packed = qkv(x);  // [S x 3D]
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = slice_cols(packed, h * dh, (h + 1) * dh);
    auto k = slice_cols(packed, dim + h * dh, dim + (h + 1) * dh);
    auto v = slice_cols(packed, 2 * dim + h * dh, 2 * dim + (h + 1) * dh);
    auto attn = softmax(scale(matmul_nt(q, k), inv_scale), 1);
    outputs.push_back(matmul(attn, v));
  }
  return proj(heads == 1 ? outputs[0] : concat(outputs, 1));
}

template <typename T>
TransformerBlock<T> TransformerBlock<T>::make(ParameterStore<T>& store, const std::string& name,
                                              std::size_t dim, std::size_t heads,
                                              std::size_t ffn_hidden, Rng& rng) {
  TransformerBlock block;
  block.ln1 = LayerNorm<T>::make(store, name + ".ln1", dim);
  block.qkv = Linear<T>::make(store, name + ".attn.qkv", dim, 3 * dim, rng);
  block.proj = Linear<T>::make(store, name + ".attn.proj", dim, dim, rng);
  block.ln2 = LayerNorm<T>::make(store, name + ".ln2", dim);
  block.ffn = Ffn<T>::make(store, name + ".ffn", dim, ffn_hidden, rng);
  block.heads = heads;
  return block;
}

template <typename T>
Tensor<T> TransformerBlock<T>::operator()(const Tensor<T>& x) const {
  auto y = add(x, multi_head_self_attention(ln1(x), qkv, proj, heads));
  return add(y, ffn(ln2(y)));
}

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& store, const EncoderConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::string bb = kBackbonePrefix;
  const std::string rel = kRelationPrefix;
  const std::size_t D = config_.dim_backbone;
  const std::size_t hidden = config_.ffn_mult * D;
  const std::size_t n = config_.num_patches();

  patch_proj_ = Linear<T>::make(store, bb + "patch_proj", 3 * config_.patch * config_.patch, D, rng);
  cls_token_ = store.create(bb + "cls_token", {1, D}, Init::Normal02, rng);
  pos_embed_ = store.create(bb + "pos_embed", {n + 1, D}, Init::Zeros, rng);
  if (config_.pos_init == "sincos") {
    const auto table = sincos_position_table<T>(config_.grid_rows(), config_.grid_cols(), D);
    std::copy(table.begin(), table.end(), pos_embed_.mutable_data().begin());
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    blocks_.push_back(TransformerBlock<T>::make(store, bb + "block" + std::to_string(l), D,
                                                config_.heads, hidden, rng));
  }
  final_norm_ = LayerNorm<T>::make(store, bb + "final_norm", D);

  rel_token_ = store.create(rel + "rel_token", {1, D}, Init::Normal02, rng);
  for (std::size_t l = 0; l < config_.rel_layers; ++l) {
    rel_blocks_.push_back(TransformerBlock<T>::make(store, rel + "block" + std::to_string(l), D,
                                                    config_.heads, hidden, rng));
  }
  rel_fc1_ = Linear<T>::make(store, rel + "head.fc1", D, D, rng);
  rel_fc2_ = Linear<T>::make(store, rel + "head.fc2", D, config_.num_relations, rng);

  fuse_ = Linear<T>::make(store, "encoder.fuse", D, config_.dim, rng);
}

template <typename T>
Tensor<T> Encoder<T>::embed(const Tensor<T>& patches) const {
  if (patches.rows() != config_.num_patches() || patches.cols() != patch_proj_.in_features()) {
    throw ShapeMismatch("encoder expects " + std::to_string(config_.num_patches()) + "x" +
                        std::to_string(patch_proj_.in_features()) + " patches, got " +
                        shape_str(patches.shape()));
  }
  auto tokens = concat<T>({cls_token_, patch_proj_(patches)}, 0);
  return add(tokens, pos_embed_);
}

template <typename T>
BackboneOutput<T> Encoder<T>::encode_backbone(const Tensor<T>& tokens) const {
  if (tokens.rank() != 2 || tokens.cols() != config_.dim_backbone || tokens.rows() < 2) {
    throw ShapeMismatch("backbone input must be [(N+1) x D], got " + shape_str(tokens.shape()));
  }
  auto x = tokens;
  for (const auto& block : blocks_) x = block(x);
  x = final_norm_(x);
  return {slice_rows(x, 0, 1), slice_rows(x, 1, x.rows())};
}

template <typename T>
Tensor<T> Encoder<T>::relation_encode(const Tensor<T>& z_patch) const {
  if (z_patch.cols() != config_.dim_backbone) {
    throw ShapeMismatch("relation branch expects width " + std::to_string(config_.dim_backbone));
  }
  if (rel_blocks_.empty()) return rel_token_;
  auto x = concat<T>({rel_token_, detach(z_patch)}, 0);
  for (const auto& block : rel_blocks_) x = block(x);
  return slice_rows(x, 0, 1);
}

template <typename T>
Tensor<T> Encoder<T>::relation_head(const Tensor<T>& z_rel) const {
  return rel_fc2_(relu(rel_fc1_(z_rel)));
}

template <typename T>
Tensor<T> Encoder<T>::fuse_project(const Tensor<T>& z_rel, const Tensor<T>& z_cls,
                                   const Tensor<T>& z_patch) const {
  std::vector<Tensor<T>> rows;
  if (z_rel) rows.push_back(z_rel);
  if (z_cls) rows.push_back(z_cls);
  rows.push_back(z_patch);
  for (const auto& r : rows) {
    if (r.cols() != config_.dim_backbone) throw ShapeMismatch("fuse_project: width mismatch");
  }
  return fuse_(rows.size() == 1 ? z_patch : concat(rows, 0));
}

template <typename T>
EncoderOutput<T> Encoder<T>::forward(const Tensor<T>& patches, const TokenFlags& flags) const {
  EncoderOutput<T> out;
  out.backbone = encode_backbone(embed(patches));
  if (flags.use_rel) {
    out.z_rel = relation_encode(out.backbone.z_patch);
    out.relation_logits = relation_head(out.z_rel);
  }
  out.v = fuse_project(flags.use_rel ? out.z_rel : Tensor<T>{},
                       flags.use_cls ? out.backbone.z_cls : Tensor<T>{}, out.backbone.z_patch);
  out.prefix_rows = flags.prefix_rows();
  return out;
}

#define WSGIC_INSTANTIATE(T)                                                              \
  template Tensor<T> patchify<T>(const Image&, std::size_t);                              \
  template std::vector<T> sincos_position_table<T>(std::size_t, std::size_t, std::size_t); \
  template Tensor<T> multi_head_self_attention<T>(const Tensor<T>&, const Linear<T>&,     \
                                                  const Linear<T>&, std::size_t);         \
  template struct TransformerBlock<T>;                                                    \
  template class Encoder<T>;

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
