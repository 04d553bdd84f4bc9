#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace wsgic {

// RGB image, interleaved row-major (HWC), channel values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
  float at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * width + x) * 3 + ch]; }
};

// Binary PPM (P6) with maxval 255. Values are quantised with round(255 v).
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// Binary PGM (P5) from 8-bit samples, row-major.
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& samples);

std::uint8_t to_byte(float v);

}  // namespace wsgic
