#include "wsgic/grounding.hpp"

#include <algorithm>
#include <cmath>

#include "wsgic/errors.hpp"
#include "wsgic/image.hpp"

namespace wsgic {

bool BoundingBox::valid_within(std::size_t image_height, std::size_t image_width) const {
  return x1 >= 0 && y1 >= 0 && x1 <= x2 && y1 <= y2 &&
         static_cast<std::size_t>(x2) < image_width && static_cast<std::size_t>(y2) < image_height;
}

Vlam upsample_vlam(std::span<const double> patch_weights, std::size_t grid_rows,
                   std::size_t grid_cols, std::size_t patch) {
  if (patch == 0 || grid_rows * grid_cols != patch_weights.size() || patch_weights.empty()) {
    throw ShapeMismatch("upsample_vlam: " + std::to_string(patch_weights.size()) +
                        " weights for a " + std::to_string(grid_rows) + "x" +
                        std::to_string(grid_cols) + " grid");
  }
  Vlam out;
  out.height = grid_rows * patch;
  out.width = grid_cols * patch;
  out.map.resize(out.height * out.width);
  for (std::size_t y = 0; y < out.height; ++y) {
    const std::size_t gr = y / patch;
    for (std::size_t x = 0; x < out.width; ++x) {
      out.map[y * out.width + x] = patch_weights[gr * grid_cols + x / patch];
    }
  }
  return out;
}

BinaryMask threshold_mask(const Vlam& vlam, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("threshold rho must lie in (0, 1)");
  const double peak = vlam.map.empty() ? 0.0 : *std::max_element(vlam.map.begin(), vlam.map.end());
  if (!(peak > 0.0)) throw DegenerateMap("attention map has no positive maximum");
  BinaryMask mask{vlam.height, vlam.width, std::vector<std::uint8_t>(vlam.map.size(), 0)};
  for (std::size_t i = 0; i < vlam.map.size(); ++i) mask.bits[i] = vlam.map[i] / peak > rho ? 1 : 0;
  return mask;
}

BoundingBox largest_region_box(const BinaryMask& mask) {
  const std::size_t h = mask.height, w = mask.width;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  BoundingBox best;
  for (std::size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || seen[start]) continue;
    BoundingBox box{static_cast<int>(start % w), static_cast<int>(start / w),
                    static_cast<int>(start % w), static_cast<int>(start / w)};
    std::size_t size = 0;
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
      box.x1 = std::min(box.x1, x);
      box.x2 = std::max(box.x2, x);
      box.y1 = std::min(box.y1, y);
      box.y2 = std::max(box.y2, y);
      auto visit = [&](std::size_t q) {
        if (mask.bits[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (static_cast<std::size_t>(x) + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (static_cast<std::size_t>(y) + 1 < h) visit(p + w);
    }
    if (size > best_size) {
      best_size = size;
      best = box;
    }
  }
  if (best_size == 0) throw EmptyMask("mask has no foreground pixel");
  return best;
}

GroundedWord ground_word(std::span<const double> patch_weights, std::size_t grid_rows,
                         std::size_t grid_cols, std::size_t patch, double rho) {
  GroundedWord out;
  out.vlam = upsample_vlam(patch_weights, grid_rows, grid_cols, patch);
  out.box = largest_region_box(threshold_mask(out.vlam, rho));
  return out;
}

std::vector<std::uint8_t> vlam_to_gray(const Vlam& vlam) {
  std::vector<std::uint8_t> out(vlam.map.size(), 0);
  const double peak = vlam.map.empty() ? 0.0 : *std::max_element(vlam.map.begin(), vlam.map.end());
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(vlam.map[i] / peak, 0.0, 1.0)));
  }
  return out;
}

void write_vlam_pgm(const std::filesystem::path& path, const Vlam& vlam) {
  write_pgm(path, vlam.height, vlam.width, vlam_to_gray(vlam));
}

}  // namespace wsgic
