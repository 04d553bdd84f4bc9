#pragma once

// Top-down image encoder. A from-scratch ViT backbone carries a [CLS] token.
// A relation branch attaches a [REL] token to stop-gradient patch features
// and feeds a multi-label relation head. One shared projection then fuses
// everything into the visual feature matrix V = [REL; CLS; patches].

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wsgic/image.hpp"
#include "wsgic/layers.hpp"

namespace wsgic {

struct EncoderConfig {
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  std::size_t patch = 8;          // P
  std::size_t dim_backbone = 64;  // D
  std::size_t layers = 2;         // L
  std::size_t rel_layers = 1;     // L_r
  std::size_t heads = 4;
  std::size_t dim = 64;           // d, width of V
  std::size_t num_relations = 6;  // N_c
  std::size_t ffn_mult = 4;
  // Starting value of the learned positional embeddings: "zeros" or
  // "sincos" (fixed 2D sine/cosine table over the patch grid, CLS row zero).
  std::string pos_init = "zeros";

  std::size_t grid_rows() const { return image_height / patch; }
  std::size_t grid_cols() const { return image_width / patch; }
  std::size_t num_patches() const { return grid_rows() * grid_cols(); }

  // Throws BadDimensions / ConfigError on an unusable configuration.
  void validate() const;
};

// Which summary tokens become rows of V.
struct TokenFlags {
  bool use_cls = true;
  bool use_rel = true;

  std::size_t prefix_rows() const { return (use_cls ? 1 : 0) + (use_rel ? 1 : 0); }
};

// Row i is the row-major (y, x, channel) flattening of patch i; patches are
// ordered row-major over the grid.
// [(rows * cols + 1) x dim] table: row 0 (CLS) is zero; patch (r, c) gets
// sin/cos of r in the first half of the columns and of c in the second.
template <typename T>
std::vector<T> sincos_position_table(std::size_t grid_rows, std::size_t grid_cols, std::size_t dim);

template <typename T>
Tensor<T> patchify(const Image& image, std::size_t patch);

// Inverse of patchify, used by tests and visualisation.
Image unpatchify(std::span<const float> rows, std::size_t height, std::size_t width,
                 std::size_t patch);

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const Linear<T>& qkv,
                                    const Linear<T>& proj, std::size_t heads);

// Pre-norm block: x + MHA(LN(x)), then + FFN(LN(.)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> ln2;
  Ffn<T> ffn;
  std::size_t heads = 1;

  static TransformerBlock make(ParameterStore<T>& store, const std::string& name,
                               std::size_t dim, std::size_t heads, std::size_t ffn_hidden,
                               Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct BackboneOutput {
  Tensor<T> z_cls;    // [1 x D]
  Tensor<T> z_patch;  // [N x D]
};

template <typename T>
struct EncoderOutput {
  Tensor<T> v;              // [(prefix + N) x d]
  Tensor<T> relation_logits;  // [1 x N_c]; empty when the relation branch is off
  std::size_t prefix_rows = 0;
  BackboneOutput<T> backbone;
  Tensor<T> z_rel;          // empty when the relation branch is off
};

template <typename T>
class Encoder {
 public:
  // Registers parameters under "encoder.backbone.*", "encoder.relation.*"
  // and "encoder.fuse.*".
  Encoder(ParameterStore<T>& store, const EncoderConfig& config, Rng& rng);

  // [CLS; patches W_p + b_p] + positional embeddings -> [(N+1) x D].
  Tensor<T> embed(const Tensor<T>& patches) const;

  // L transformer layers over the embedded sequence.
  BackboneOutput<T> encode_backbone(const Tensor<T>& tokens) const;

  // L_r layers over [rel_token; stop_gradient(z_patch)]; returns the [REL] row.
  Tensor<T> relation_encode(const Tensor<T>& z_patch) const;

  // 2-layer MLP D -> D -> N_c.
  Tensor<T> relation_head(const Tensor<T>& z_rel) const;

  // Shared linear D -> d over [z_rel; z_cls; z_patch]; either token may be
  // empty, in which case its row is omitted.
  Tensor<T> fuse_project(const Tensor<T>& z_rel, const Tensor<T>& z_cls,
                         const Tensor<T>& z_patch) const;

  EncoderOutput<T> forward(const Tensor<T>& patches, const TokenFlags& flags) const;

  const EncoderConfig& config() const { return config_; }

  static constexpr const char* kBackbonePrefix = "encoder.backbone.";
  static constexpr const char* kRelationPrefix = "encoder.relation.";

 private:
  EncoderConfig config_;
  Linear<T> patch_proj_;
  Tensor<T> cls_token_;
  Tensor<T> pos_embed_;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> final_norm_;
  Tensor<T> rel_token_;
  std::vector<TransformerBlock<T>> rel_blocks_;
  Linear<T> rel_fc1_;
  Linear<T> rel_fc2_;
  Linear<T> fuse_;
};

}  // namespace wsgic
