#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chartx/common.hpp"

namespace chartx::gen {

struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major, 3 bytes per pixel

  ImageRGB() = default;
  ImageRGB(int w, int h, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3) {
    for (size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = r;
      pixels[i + 1] = g;
      pixels[i + 2] = b;
    }
  }

  uint8_t* at(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<size_t>(y) * width + x) * 3];
  }
  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    if (!inside(x, y)) return;
    uint8_t* p = at(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
};

// 8-bit RGB, non-interlaced, filter 0 on every scanline; deterministic output.
void write_png(const ImageRGB& img, const std::string& path);
std::vector<uint8_t> encode_png(const ImageRGB& img);

// Reads 8-bit RGB/RGBA/grayscale non-interlaced PNGs (alpha is dropped).
ImageRGB read_png(const std::string& path);

}  // namespace chartx::gen
