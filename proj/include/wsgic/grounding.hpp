#pragma once

// Turning a per-patch similarity vector into a pixel-space box:
// upsample to a Visual-Language Attention Map, binarise it against a fraction
// of its peak, and box the largest 4-connected foreground region.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wsgic {

inline constexpr double kDefaultRho = 0.05;

// Inclusive pixel corners, x = column, y = row.
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  long width() const { return static_cast<long>(x2) - x1 + 1; }
  long height() const { return static_cast<long>(y2) - y1 + 1; }
  long area() const { return width() * height(); }
  bool valid_within(std::size_t image_height, std::size_t image_width) const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Vlam {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> map;  // row-major, non-negative
  std::size_t word_index = 0;

  double at(std::size_t y, std::size_t x) const { return map[y * width + x]; }
};

struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
};

// Reshape to the patch grid (row-major) and nearest-neighbour upsample by
// `patch`, so each patch value fills its own patch x patch pixel block.
Vlam upsample_vlam(std::span<const double> patch_weights, std::size_t grid_rows,
                   std::size_t grid_cols, std::size_t patch);

// K = 1 where map / max(map) > rho. Throws DegenerateMap when max(map) <= 0.
BinaryMask threshold_mask(const Vlam& vlam, double rho = kDefaultRho);

// Tight box of the largest 4-connected component of ones. Ties go to the
// component whose first pixel comes first in row-major order.
BoundingBox largest_region_box(const BinaryMask& mask);

struct GroundedWord {
  Vlam vlam;
  BoundingBox box;
};

GroundedWord ground_word(std::span<const double> patch_weights, std::size_t grid_rows,
                         std::size_t grid_cols, std::size_t patch, double rho = kDefaultRho);

// 8-bit rendering: round(255 * map / max(map)); an all-zero map renders black.
std::vector<std::uint8_t> vlam_to_gray(const Vlam& vlam);
void write_vlam_pgm(const std::filesystem::path& path, const Vlam& vlam);

}  // namespace wsgic
