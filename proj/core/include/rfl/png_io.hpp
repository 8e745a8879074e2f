#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rfl {

struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

struct RgbImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    auto* p = &pixels[3 * (static_cast<std::size_t>(x) * w + y)];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

GrayImage read_png_gray8(const std::string& path);
void write_png_gray8(const std::string& path, const GrayImage& img);
void write_png_rgb8(const std::string& path, const RgbImage& img);

}  // namespace rfl
