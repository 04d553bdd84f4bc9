#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "suites.hpp"
#include "wsgic/errors.hpp"
#include "wsgic/grounding.hpp"
#include "wsgic/params.hpp"

using namespace wsgic;

namespace {

BinaryMask mask_from(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits) {
  return {h, w, std::move(bits)};
}

Vlam vlam_from(std::size_t h, std::size_t w, std::vector<double> map) {
  Vlam v;
  v.height = h;
  v.width = w;
  v.map = std::move(map);
  return v;
}

}  // namespace

TEST_CASE("threshold hand example with the strict comparison") {
  auto k = threshold_mask(vlam_from(2, 2, {0.2, 0.004, 0.01, 0.0}), 0.05);
  CHECK(k.bits == std::vector<std::uint8_t>{1, 0, 0, 0});
  auto all = threshold_mask(vlam_from(2, 3, std::vector<double>(6, 0.3)));
  CHECK(std::ranges::all_of(all.bits, [](auto b) { return b == 1; }));
  CHECK_THROWS_AS(threshold_mask(vlam_from(1, 2, {0.0, 0.0})), DegenerateMap);
}

TEST_CASE("threshold mask is invariant to positive scaling") {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> m(64);
    for (auto& x : m) x = u(rng) * u(rng);
    auto base = threshold_mask(vlam_from(8, 8, m));
    for (double factor : {1e-6, 0.37, 8.0, 1e5}) {
      std::vector<double> scaled = m;
      for (auto& x : scaled) x *= factor;
      CHECK(threshold_mask(vlam_from(8, 8, scaled)).bits == base.bits);
    }
  }
}

TEST_CASE("upsampling is block constant and conserves mass") {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(12);
  for (auto& x : w) x = u(rng);
  const std::size_t p = 4;
  auto v = upsample_vlam(w, 3, 4, p);
  CHECK(v.height == 12);
  CHECK(v.width == 16);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 16; ++x) CHECK(v.at(y, x) == w[(y / p) * 4 + x / p]);
  const double mass = std::accumulate(v.map.begin(), v.map.end(), 0.0);
  CHECK(mass == doctest::Approx(p * p * std::accumulate(w.begin(), w.end(), 0.0)));
  CHECK_THROWS_AS(upsample_vlam(w, 3, 3, p), ShapeMismatch);

  auto flat = upsample_vlam(std::vector<double>(4, 0.25), 2, 2, 3);
  CHECK(std::ranges::all_of(flat.map, [](double x) { return x == 0.25; }));
}

TEST_CASE("largest region hand examples") {
  std::vector<std::uint8_t> single(5 * 6, 0);
  single[2 * 6 + 3] = 1;
  CHECK(largest_region_box(mask_from(5, 6, single)) == BoundingBox{3, 2, 3, 2});

  // Components of 3 and 5 pixels; the diagonal neighbour is not 4-connected.
  auto bits = std::vector<std::uint8_t>{
      1, 1, 0, 0, 0,  //
      1, 0, 0, 0, 0,  //
      0, 0, 0, 1, 1,  //
      0, 0, 1, 1, 1,  //
  };
  CHECK(largest_region_box(mask_from(4, 5, bits)) == BoundingBox{2, 2, 4, 3});

  // Equal sizes: the component whose first pixel comes first wins.
  auto tie = std::vector<std::uint8_t>{
      0, 0, 0, 1,  //
      1, 0, 0, 1,  //
      1, 0, 0, 0,  //
  };
  CHECK(largest_region_box(mask_from(3, 4, tie)) == BoundingBox{3, 0, 3, 1});

  CHECK(largest_region_box(mask_from(3, 4, std::vector<std::uint8_t>(12, 1))) == BoundingBox{0, 0, 3, 2});
  CHECK_THROWS_AS(largest_region_box(mask_from(2, 2, {0, 0, 0, 0})), EmptyMask);
}

TEST_CASE("ground_word end to end") {
  std::vector<double> onehot(16, 0.0);
  onehot[1 * 4 + 2] = 0.9;
  auto g = ground_word(onehot, 4, 4, 8);
  CHECK(g.box == BoundingBox{16, 8, 23, 15});

  std::vector<double> plateau(16, 0.0);
  plateau[2 * 4 + 0] = 0.4;
  plateau[2 * 4 + 1] = 0.4;
  CHECK(ground_word(plateau, 4, 4, 8).box == BoundingBox{0, 16, 15, 23});

  CHECK(ground_word(std::vector<double>(16, 0.1), 4, 4, 8).box == BoundingBox{0, 0, 31, 31});
  CHECK_THROWS_AS(ground_word(std::vector<double>(16, 0.0), 4, 4, 8), DegenerateMap);
}

TEST_CASE("ground_word always returns a valid box for a positive map") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(64);
    for (auto& x : w) x = u(rng) < 0.7 ? 0.0 : u(rng);
    w[static_cast<std::size_t>(u(rng) * 63)] += 1e-9;
    auto g = ground_word(w, 8, 8, 8, 0.05 + 0.9 * u(rng));
    CHECK(g.box.valid_within(64, 64));
    CHECK(g.box.area() > 0);
  }
}

TEST_CASE("VLAM export") {
  auto v = vlam_from(1, 3, {0.0, 0.5, 2.0});
  CHECK(vlam_to_gray(v) == std::vector<std::uint8_t>{0, 64, 255});
  CHECK(vlam_to_gray(vlam_from(1, 2, {0.0, 0.0})) == std::vector<std::uint8_t>{0, 0});

  const auto path = std::filesystem::temp_directory_path() / "wsgic_test_vlam.pgm";
  write_vlam_pgm(path, v);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  std::vector<char> px(3);
  in.read(px.data(), 3);
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 1);
  CHECK(maxval == 255);
  CHECK(static_cast<unsigned char>(px[2]) == 255);
}

TEST_CASE("grounding suite against brute-force oracles") {
  for (const auto& c : testing::grounding_suite(500, 1000, 200)) {
    INFO(c.name << ": " << c.detail);
    CHECK(c.passed);
  }
}
