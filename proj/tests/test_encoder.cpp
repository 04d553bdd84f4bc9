#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/training.hpp"

using namespace wsgic;

namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  Image img(h, w);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.image_height = 32;
  c.image_width = 32;
  c.patch = 8;
  c.dim_backbone = 16;
  c.layers = 2;
  c.rel_layers = 1;
  c.heads = 2;
  c.dim = 12;
  c.num_relations = 3;
  c.ffn_mult = 2;
  return c;
}

void zero_parameter(ParameterStore<double>& store, const std::string& name) {
  auto t = store.at(name).tensor;
  std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

}  // namespace

TEST_CASE("patchify layout and its inverse") {
  Image img(16, 24);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 24; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = float(y * 1000 + x * 10 + ch) / 20000.0f;
  auto p = patchify<float>(img, 8);
  CHECK(p.shape() == Shape{6, 192});
  // Patch 4 is grid row 1, column 1; its entry (y=2, x=5, ch=1) sits at (2*8+5)*3+1.
  CHECK(p.at(4, (2 * 8 + 5) * 3 + 1) == img.at(8 + 2, 8 + 5, 1));
  Image back = unpatchify(p.data(), 16, 24, 8);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(patchify<float>(Image(20, 16), 8), BadDimensions);
}

TEST_CASE("encoder shapes over the dimension grid") {
  struct Dims {
    std::size_t h, w, p;
  };
  for (const Dims& dims : {Dims{64, 64, 8}, Dims{96, 64, 8}, Dims{224, 224, 16}}) {
    EncoderConfig c = small_config();
    c.image_height = dims.h;
    c.image_width = dims.w;
    c.patch = dims.p;
    c.layers = 1;
    ParameterStore<float> store;
    Rng rng(11);
    Encoder<float> enc(store, c, rng);
    Rng img_rng(1);
    auto out = enc.forward(patchify<float>(random_image(dims.h, dims.w, img_rng), dims.p), {});
    const std::size_t n = (dims.h / dims.p) * (dims.w / dims.p);
    INFO(dims.h << "x" << dims.w << " P=" << dims.p);
    CHECK(out.v.shape() == Shape{n + 2, c.dim});
    CHECK(out.prefix_rows == 2);
    CHECK(out.backbone.z_patch.shape() == Shape{n, c.dim_backbone});
    CHECK(out.relation_logits.shape() == Shape{1, c.num_relations});
  }
}

TEST_CASE("invalid encoder configurations are rejected") {
  EncoderConfig c = small_config();
  c.dim_backbone = 15;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.image_width = 30;
  CHECK_THROWS_AS(c.validate(), BadDimensions);
  c = small_config();
  c.rel_layers = 0;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.pos_init = "learned-ish";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("token flags decide the prefix rows of V") {
  ParameterStore<float> store;
  Rng rng(3);
  Encoder<float> enc(store, small_config(), rng);
  Rng img_rng(2);
  auto patches = patchify<float>(random_image(32, 32, img_rng), 8);
  for (bool cls : {false, true}) {
    for (bool rel : {false, true}) {
      auto out = enc.forward(patches, {cls, rel});
      CHECK(out.prefix_rows == std::size_t(cls) + std::size_t(rel));
      CHECK(out.v.rows() == 16 + out.prefix_rows);
      CHECK(static_cast<bool>(out.relation_logits) == rel);
    }
  }
}

TEST_CASE("V rows are [REL; CLS; patches] under one shared projection") {
  ParameterStore<double> store;
  Rng rng(5);
  Encoder<double> enc(store, small_config(), rng);
  Rng img_rng(4);
  auto out = enc.forward(patchify<double>(random_image(32, 32, img_rng), 8), {});
  const auto expect_rel = enc.fuse_project(out.z_rel, {}, slice_rows(out.backbone.z_patch, 0, 1));
  const auto expect_cls = enc.fuse_project({}, out.backbone.z_cls, slice_rows(out.backbone.z_patch, 0, 1));
  const auto expect_patches = enc.fuse_project({}, {}, out.backbone.z_patch);
  const std::size_t d = out.v.cols();
  // Row blocking inside the matrix kernel may reorder sums, so compare to rounding.
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(same(out.v.at(0, j), expect_rel.at(0, j)));
    CHECK(same(out.v.at(1, j), expect_cls.at(0, j)));
  }
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(same(out.v.at(i + 2, j), expect_patches.at(i, j)));
}

TEST_CASE("fuse projection with identity weights copies its inputs") {
  EncoderConfig c = small_config();
  c.dim = c.dim_backbone;
  ParameterStore<double> store;
  Rng rng(6);
  Encoder<double> enc(store, c, rng);
  zero_parameter(store, "encoder.fuse.bias");
  auto w = store.at("encoder.fuse.weight").tensor;
  auto wd = w.mutable_data();
  std::fill(wd.begin(), wd.end(), 0.0);
  for (std::size_t i = 0; i < c.dim; ++i) wd[i * c.dim + i] = 1.0;
  Rng data_rng(7);
  auto a = testing::random_tensor({1, c.dim}, data_rng);
  auto b = testing::random_tensor({1, c.dim}, data_rng);
  auto p = testing::random_tensor({3, c.dim}, data_rng);
  auto v = enc.fuse_project(a, b, p);
  auto expected = concat<double>({a, b, p}, 0);
  CHECK(std::equal(v.data().begin(), v.data().end(), expected.data().begin()));
}

TEST_CASE("relation head with zero weights gives zero logits") {
  ParameterStore<double> store;
  Rng rng(8);
  Encoder<double> enc(store, small_config(), rng);
  for (const char* name : {"encoder.relation.head.fc1.weight", "encoder.relation.head.fc1.bias",
                           "encoder.relation.head.fc2.weight", "encoder.relation.head.fc2.bias"}) {
    zero_parameter(store, name);
  }
  Rng data_rng(1);
  auto logits = enc.relation_head(testing::random_tensor({1, 16}, data_rng));
  for (double v : logits.data()) CHECK(v == 0.0);
}

TEST_CASE("backbone is permutation equivariant once positions are zero") {
  ParameterStore<double> store;
  Rng rng(9);
  EncoderConfig c = small_config();
  Encoder<double> enc(store, c, rng);
  zero_parameter(store, "encoder.backbone.pos_embed");
  Rng img_rng(10);
  auto patches = patchify<double>(random_image(32, 32, img_rng), 8);
  const std::size_t n = patches.rows(), width = patches.cols();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), img_rng);
  std::vector<double> shuffled(n * width);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(patches.data().begin() + perm[i] * width, width, shuffled.begin() + i * width);

  auto base = enc.encode_backbone(enc.embed(patches));
  auto moved = enc.encode_backbone(enc.embed(Tensor<double>::from({n, width}, shuffled)));
  double worst = 0.0;
  for (std::size_t j = 0; j < c.dim_backbone; ++j) worst = std::max(worst, std::abs(base.z_cls.at(0, j) - moved.z_cls.at(0, j)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c.dim_backbone; ++j)
      worst = std::max(worst, std::abs(moved.z_patch.at(i, j) - base.z_patch.at(perm[i], j)));
  CHECK(worst < 1e-10);
}

TEST_CASE("relation-only training step leaves the backbone bitwise unchanged") {
  ModelConfig mc;
  mc.encoder = small_config();
  mc.decoder_heads = 2;
  Captioner<float> model(mc, 8, 21);
  Rng img_rng(12);
  const Image img = random_image(32, 32, img_rng);
  const std::vector<float> targets = {1, 0, 1};

  auto snapshot = [&](const char* prefix) {
    std::vector<std::vector<float>> out;
    for (const auto& [name, p] : model.params())
      if (name.rfind(prefix, 0) == 0) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
  };
  const auto backbone_before = snapshot(Encoder<float>::kBackbonePrefix);
  const auto relation_before = snapshot(Encoder<float>::kRelationPrefix);

  model.params().zero_grad();
  auto enc = model.encode(img);
  backward(loss_mlc(enc.relation_logits, std::span<const float>(targets)));
  AdamState<float> state;
  adam_step(model.params(), state, AdamOptions{});

  CHECK(snapshot(Encoder<float>::kBackbonePrefix) == backbone_before);
  CHECK(snapshot(Encoder<float>::kRelationPrefix) != relation_before);
}

TEST_CASE("sine-cosine position table") {
  const auto table = sincos_position_table<double>(2, 3, 8);
  REQUIRE(table.size() == 7 * 8);
  for (std::size_t j = 0; j < 8; ++j) CHECK(table[j] == 0.0);
  // Patch (1, 2) is row 1 + 1 * 3 + 2 = 6. First half encodes r = 1, second c = 2.
  const double* row = table.data() + 6 * 8;
  CHECK(row[0] == doctest::Approx(std::sin(1.0)));
  CHECK(row[2] == doctest::Approx(std::cos(1.0)));
  CHECK(row[1] == doctest::Approx(std::sin(1.0 / 100.0)));
  CHECK(row[4] == doctest::Approx(std::sin(2.0)));
  CHECK(row[6] == doctest::Approx(std::cos(2.0)));

  EncoderConfig c = small_config();
  c.pos_init = "sincos";
  ParameterStore<float> store;
  Rng rng(1);
  Encoder<float> enc(store, c, rng);
  const auto expected = sincos_position_table<float>(4, 4, 16);
  const auto pos = store.at("encoder.backbone.pos_embed").tensor.data();
  CHECK(std::equal(pos.begin(), pos.end(), expected.begin(), expected.end()));
}
