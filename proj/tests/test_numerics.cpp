#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "suites.hpp"
#include "wsgic/adam.hpp"
#include "wsgic/checkpoint.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/layers.hpp"

using namespace wsgic;
using wsgic::testing::random_tensor;

namespace {

Tensor<double> mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor<double>::from({r, c}, std::move(v));
}

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "wsgic_test_numerics";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("matmul hand examples") {
  CHECK(values(matmul(mat(2, 2, {1, 0, 0, 1}), mat(2, 2, {1, 2, 3, 4}))) == std::vector<double>{1, 2, 3, 4});
  CHECK(values(matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4}))) == std::vector<double>{11});
  CHECK_THROWS_AS(matmul(mat(1, 2, {1, 2}), mat(3, 1, {1, 2, 3})), ShapeMismatch);
}

TEST_CASE("gradient of sum(a b) with respect to a is ones times b transposed") {
  auto a = mat(2, 3, {1, 2, 3, 4, 5, 6});
  auto b = mat(3, 2, {1, -1, 2, 0.5, -3, 4});
  a.set_requires_grad(true);
  backward(sum(matmul(a, b)));
  const std::vector<double> expected = {0, 2.5, 1, 0, 2.5, 1};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a.grad()[i] == doctest::Approx(expected[i]));
}

TEST_CASE("softmax hand examples") {
  auto s = softmax(mat(1, 2, {0, 0}), 1);
  CHECK(s.at(0) == doctest::Approx(0.5));
  s = softmax(mat(1, 2, {0, std::log(3.0)}), 1);
  CHECK(s.at(0) == doctest::Approx(0.25));
  CHECK(s.at(1) == doctest::Approx(0.75));
  s = softmax(mat(1, 2, {1000, 0}), 1);
  CHECK(std::isfinite(s.at(0)));
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one and stay in [0, 1]") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({4, 9}, rng, -30.0, 30.0);
    for (int axis : {0, 1}) {
      auto s = softmax(x, axis);
      const std::size_t outer = axis == 1 ? 4 : 9, inner = axis == 1 ? 9 : 4;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const double v = axis == 1 ? s.at(o, i) : s.at(i, o);
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("layer norm hand examples") {
  auto gain = Tensor<double>::full({2}, 1.0);
  auto bias = Tensor<double>::zeros({2});
  auto y = layer_norm(mat(1, 2, {1, 3}), gain, bias);
  CHECK(std::abs(y.at(0) + 1.0) <= 1e-3);
  CHECK(std::abs(y.at(1) - 1.0) <= 1e-3);
  auto gain3 = Tensor<double>::full({3}, 1.0);
  auto z = layer_norm(mat(1, 3, {4, 4, 4}), gain3, Tensor<double>::zeros({3}));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("GLU limits") {
  ParameterStore<double> store;
  Rng rng(1);
  auto glu = Glu<double>::make(store, "glu", 3, rng);
  auto x = mat(1, 3, {0.3, -1.2, 2.0});
  for (auto& [_, p] : store) std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
  const auto off = glu(x);
  for (double v : off.data()) CHECK(v == 0.0);
  // Identity value path, gate pushed open.
  auto w = glu.value.weight.mutable_data();
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  std::fill(glu.gate.bias.mutable_data().begin(), glu.gate.bias.mutable_data().end(), 20.0);
  auto y = glu(x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(y.at(i) - x.at(i)) <= 1e-6);
}

TEST_CASE("LSTM cell with zero parameters") {
  ParameterStore<double> store;
  Rng rng(2);
  auto cell = LstmCell<double>::make(store, "lstm", 2, 3, rng);
  for (auto& [_, p] : store) std::fill(p.tensor.mutable_data().begin(), p.tensor.mutable_data().end(), 0.0);
  auto x = mat(1, 2, {0.7, -0.1});
  auto h0 = Tensor<double>::zeros({1, 3});
  auto s = cell(x, h0, Tensor<double>::zeros({1, 3}));
  for (double v : s.h.data()) CHECK(v == 0.0);
  for (double v : s.c.data()) CHECK(v == 0.0);
  auto c_prev = mat(1, 3, {1.0, -2.0, 0.5});
  s = cell(x, h0, c_prev);
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.c.at(i) == doctest::Approx(0.5 * c_prev.at(i)));
}

TEST_CASE("Adam first step and zero gradient") {
  std::vector<double> p = {0.0}, g = {1.0}, m = {0.0}, v = {0.0};
  AdamOptions opt;
  opt.lr = 0.1;
  adam_update<double>(p, g, m, v, 1, opt);
  CHECK(std::abs(p[0] + 0.1) <= 1e-6);

  std::vector<double> q = {0.25, -3.0}, zero = {0.0, 0.0}, m2 = {0.0, 0.0}, v2 = {0.0, 0.0};
  adam_update<double>(q, zero, m2, v2, 1, opt);
  CHECK(q == std::vector<double>{0.25, -3.0});

  std::vector<double> short_grad = {1.0};
  CHECK_THROWS_AS(adam_update<double>(q, short_grad, m2, v2, 2, opt), ShapeMismatch);
}

TEST_CASE("Adam skips frozen parameters and two identical runs agree bitwise") {
  auto run = [](bool freeze) {
    ParameterStore<float> store;
    Rng rng(9);
    auto lin = Linear<float>::make(store, "lin", 3, 2, rng);
    if (freeze) store.set_trainable("lin.bias", false);
    AdamState<float> state;
    auto x = Tensor<float>::from({2, 3}, {1, 2, 3, -1, 0, 1});
    for (int step = 0; step < 5; ++step) {
      store.zero_grad();
      backward(sum(mul(lin(x), lin(x))));
      adam_step(store, state, AdamOptions{});
    }
    return store.flatten();
  };
  CHECK(run(false) == run(false));
  ParameterStore<float> fresh;
  Rng rng(9);
  Linear<float>::make(fresh, "lin", 3, 2, rng);
  const auto frozen = run(true);
  // Name order: lin.bias first.
  for (std::size_t i = 0; i < 2; ++i) CHECK(frozen[i] == fresh.flatten()[i]);
}

TEST_CASE("gradient clipping returns the pre-clip norm and rescales") {
  ParameterStore<double> store;
  Rng rng(3);
  auto w = store.create("w", {2}, Init::Zeros, rng);
  backward(sum(mul(w, Tensor<double>::from({2}, {3.0, 4.0}))));
  CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("no-grad guard records no graph") {
  auto a = Tensor<double>::from({1, 2}, {1, 2}, true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = scale(a, 2.0);
  }
  CHECK_FALSE(y.requires_grad());
  CHECK(grad_enabled());
}

TEST_CASE("cross entropy ignores masked rows and sigmoid BCE hand values") {
  auto logits = mat(2, 3, {0, 0, 0, 5, 1, 2});
  const std::vector<int> targets = {1, -1};
  CHECK(cross_entropy_from_logits(logits, std::span<const int>(targets), -1).item() == doctest::Approx(std::log(3.0)));
  const std::vector<int> all_ignored = {-1, -1};
  CHECK(cross_entropy_from_logits(logits, std::span<const int>(all_ignored), -1).item() == 0.0);
  const std::vector<double> z = {1, 0, 1};
  CHECK(sigmoid_bce(mat(1, 3, {0, 0, 0}), std::span<const double>(z)).item() == doctest::Approx(3 * std::log(2.0)));
}

TEST_CASE("detach cuts the gradient path") {
  auto a = Tensor<double>::from({1, 2}, {1, 2}, true);
  backward(sum(mul(detach(a), a)));
  CHECK(a.grad()[0] == doctest::Approx(1.0));
  CHECK(a.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("gradient suite: every op and layer matches central differences") {
  for (const auto& c : wsgic::testing::gradient_suite()) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
}

TEST_CASE("checkpoint round trip, name order and strict loading") {
  ParameterStore<float> store;
  Rng rng(4);
  store.create("b.weight", {2, 3}, Init::XavierUniform, rng);
  store.create("a.bias", {3}, Init::Normal02, rng);
  const auto path = temp_path("round.ckpt");
  save_parameters(store, path);

  const auto records = read_records(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].name == "a.bias");
  CHECK(records[1].name == "b.weight");
  CHECK(records[1].shape == Shape{2, 3});

  std::ifstream in(path, std::ios::binary);
  char magic[5];
  in.read(magic, 5);
  CHECK(std::string(magic, 5) == "VLAM1");

  ParameterStore<float> copy;
  Rng other(99);
  copy.create("b.weight", {2, 3}, Init::Zeros, other);
  copy.create("a.bias", {3}, Init::Zeros, other);
  load_parameters(copy, path);
  CHECK(copy.flatten() == store.flatten());

  ParameterStore<float> wrong_shape;
  wrong_shape.create("b.weight", {3, 2}, Init::Zeros, other);
  wrong_shape.create("a.bias", {3}, Init::Zeros, other);
  CHECK_THROWS_AS(load_parameters(wrong_shape, path), ShapeMismatch);

  ParameterStore<float> missing;
  missing.create("a.bias", {3}, Init::Zeros, other);
  CHECK_THROWS(load_parameters(missing, path));

  CHECK_THROWS_AS(read_records(temp_path("does_not_exist.ckpt")), MissingCheckpoint);
}
