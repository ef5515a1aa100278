#include "soldernet/image.hpp"

#include <algorithm>
#include <cmath>

namespace soldernet {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

std::size_t intersection_count(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw ParameterError("mask size mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) n += (a.data[i] && b.data[i]) ? 1 : 0;
  return n;
}

double intersection_over_union(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw ParameterError("mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += (a.data[i] && b.data[i]) ? 1 : 0;
    uni += (a.data[i] || b.data[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask dilate(const Mask& m, int radius) {
  Mask out(m.width, m.height);
  const int r2 = radius * radius;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dx * dx + dy * dy > r2) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < m.width && ny < m.height) out.at(nx, ny) = 1;
        }
      }
    }
  }
  return out;
}

ImageF to_float(const ImageU8& img) {
  ImageF out(img.width, img.height, img.channels);
  std::transform(img.data.begin(), img.data.end(), out.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return out;
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.width, img.height, img.channels);
  std::transform(img.data.begin(), img.data.end(), out.data.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  return out;
}

Rgb mean_color(const ImageF& img) {
  double acc[3] = {0, 0, 0};
  const std::size_t px = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < px; ++i) {
    for (int c = 0; c < 3 && c < img.channels; ++c) acc[c] += img.data[i * img.channels + c];
  }
  if (px == 0) return {};
  return {static_cast<float>(acc[0] / px), static_cast<float>(acc[1] / px), static_cast<float>(acc[2] / px)};
}

Hsv to_hsv(Rgb c) {
  const float mx = std::max({c.r, c.g, c.b});
  const float mn = std::min({c.r, c.g, c.b});
  const float d = mx - mn;
  Hsv out{0.0f, mx > 0.0f ? d / mx : 0.0f, mx};
  if (d <= 0.0f) return out;
  float h;
  if (mx == c.r) {
    h = (c.g - c.b) / d;
  } else if (mx == c.g) {
    h = 2.0f + (c.b - c.r) / d;
  } else {
    h = 4.0f + (c.r - c.g) / d;
  }
  h *= 60.0f;
  if (h < 0.0f) h += 360.0f;
  out.h = h;
  return out;
}

Rgb from_hsv(Hsv c) {
  const float h = std::fmod(std::fmod(c.h, 360.0f) + 360.0f, 360.0f) / 60.0f;
  const int sector = static_cast<int>(h) % 6;
  const float f = h - std::floor(h);
  const float p = c.v * (1 - c.s), q = c.v * (1 - c.s * f), t = c.v * (1 - c.s * (1 - f));
  switch (sector) {
    case 0: return {c.v, t, p};
    case 1: return {q, c.v, p};
    case 2: return {p, c.v, t};
    case 3: return {p, q, c.v};
    case 4: return {t, p, c.v};
    default: return {c.v, p, q};
  }
}

}  // namespace soldernet
