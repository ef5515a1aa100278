#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "soldernet/common.hpp"

namespace soldernet {

constexpr int kImageSize = 256;

// Interleaved 8-bit image, row-major, `channels` samples per pixel.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) { return data[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return data[index(x, y, c)]; }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  bool operator==(const ImageU8&) const = default;
};

// Floating RGB image. Values are expected in [0,1] once normalized.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data[index(x, y, c)]; }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  bool operator==(const ImageF&) const = default;
};

// 256x256x3 image with every value in [0,1].
using NormalizedImage = ImageF;

// Binary mask, one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const Mask&) const = default;
};

std::size_t intersection_count(const Mask& a, const Mask& b);
double intersection_over_union(const Mask& a, const Mask& b);
Mask dilate(const Mask& m, int radius);

// Converts 8-bit samples to floats by division by 255 without resizing.
ImageF to_float(const ImageU8& img);
// Rounds and clamps floats back to 8-bit.
ImageU8 to_u8(const ImageF& img);

struct Rgb {
  float r = 0, g = 0, b = 0;
};

// Per-channel mean colour of a float image.
Rgb mean_color(const ImageF& img);

// Hue in degrees [0,360), saturation and value in [0,1].
struct Hsv {
  float h = 0, s = 0, v = 0;
};
Hsv to_hsv(Rgb c);
Rgb from_hsv(Hsv c);

}  // namespace soldernet
