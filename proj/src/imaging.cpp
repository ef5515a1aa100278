#include "soldernet/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "soldernet/rng.hpp"

namespace soldernet::imaging {
namespace {

float sample_bilinear(const ImageF& src, double sx, double sy, int c) {
  sx = std::clamp(sx, 0.0, static_cast<double>(src.width - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(src.height - 1));
  const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double top = src.at(x0, y0, c) * (1 - fx) + src.at(x1, y0, c) * fx;
  const double bot = src.at(x0, y1, c) * (1 - fx) + src.at(x1, y1, c) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

void clamp_unit(ImageF& img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

ImageF resize_bilinear(const ImageF& src, int width, int height) {
  if (src.width <= 0 || src.height <= 0) throw ParameterError("cannot resize an empty image");
  if (src.width == width && src.height == height) return src;
  ImageF out(width, height, src.channels);
  const double scale_x = static_cast<double>(src.width) / width;
  const double scale_y = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double sy = (y + 0.5) * scale_y - 0.5;
    for (int x = 0; x < width; ++x) {
      const double sx = (x + 0.5) * scale_x - 0.5;
      for (int c = 0; c < src.channels; ++c) out.at(x, y, c) = sample_bilinear(src, sx, sy, c);
    }
  }
  return out;
}

NormalizedImage preprocess(const ImageU8& image) {
  if (image.width == 0 || image.height == 0) throw ParameterError("zero-dimension image");
  if (image.width < 8 || image.height < 8) {
    throw ParameterError("image must be at least 8x8, got " + std::to_string(image.width) + "x" +
                         std::to_string(image.height));
  }
  if (image.channels != 1 && image.channels != 3 && image.channels != 4) {
    throw ParameterError("unsupported channel count " + std::to_string(image.channels));
  }
  // Resize in 8-bit units, then scale, so constant inputs map to exactly v/255.
  ImageF rgb(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = image.at(x, y, image.channels == 1 ? 0 : c);
    }
  }
  ImageF out = resize_bilinear(rgb, kImageSize, kImageSize);
  for (auto& v : out.data) v = std::clamp(v / 255.0f, 0.0f, 1.0f);
  return out;
}

void AugmentPolicy::validate() const {
  if (!(per_op_probability >= 0.0 && per_op_probability <= 1.0)) {
    throw ParameterError("per_op_probability must be in [0,1]");
  }
  if (rotation_min_deg > rotation_max_deg) throw ParameterError("rotation range is empty");
  if (translate_frac < 0 || brightness_jitter < 0 || contrast_jitter < 0) {
    throw ParameterError("augmentation magnitudes must be non-negative");
  }
}

NormalizedImage rotate(const NormalizedImage& image, double degrees) {
  if (degrees == 0.0) return image;
  const Rgb fill = mean_color(image);
  const float fills[3] = {fill.r, fill.g, fill.b};
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = image.width / 2.0, cy = image.height / 2.0;
  NormalizedImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // Inverse map: rotate the destination pixel centre back into the source.
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double sx = cs * dx + sn * dy + cx - 0.5;
      const double sy = -sn * dx + cs * dy + cy - 0.5;
      const bool inside = sx >= -0.5 && sy >= -0.5 && sx <= image.width - 0.5 && sy <= image.height - 0.5;
      for (int c = 0; c < image.channels; ++c) {
        out.at(x, y, c) = inside ? sample_bilinear(image, sx, sy, c) : fills[c % 3];
      }
    }
  }
  return out;
}

NormalizedImage flip_horizontal(const NormalizedImage& image) {
  NormalizedImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
  return out;
}

NormalizedImage flip_vertical(const NormalizedImage& image) {
  NormalizedImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(x, image.height - 1 - y, c);
  return out;
}

NormalizedImage translate(const NormalizedImage& image, int dx, int dy) {
  const Rgb fill = mean_color(image);
  const float fills[3] = {fill.r, fill.g, fill.b};
  NormalizedImage out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int sx = x - dx, sy = y - dy;
      const bool inside = sx >= 0 && sy >= 0 && sx < image.width && sy < image.height;
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = inside ? image.at(sx, sy, c) : fills[c % 3];
    }
  }
  return out;
}

NormalizedImage adjust_brightness(const NormalizedImage& image, double delta) {
  NormalizedImage out = image;
  for (auto& v : out.data) v = static_cast<float>(v + delta);
  clamp_unit(out);
  return out;
}

NormalizedImage adjust_contrast(const NormalizedImage& image, double factor) {
  double mean = 0;
  for (float v : image.data) mean += v;
  mean /= static_cast<double>(image.data.size());
  NormalizedImage out = image;
  for (auto& v : out.data) v = static_cast<float>((v - mean) * factor + mean);
  clamp_unit(out);
  return out;
}

NormalizedImage augment(const NormalizedImage& image, const AugmentPolicy& policy, std::uint64_t rng_seed) {
  policy.validate();
  Rng rng(rng_seed);
  const double p = policy.per_op_probability;
  NormalizedImage out = image;
  // Every op draws its coin and parameters unconditionally so the stream layout
  // does not depend on which ops fire.
  {
    const bool fire = rng.bernoulli(p);
    const double angle = rng.uniform(policy.rotation_min_deg, policy.rotation_max_deg);
    if (policy.rotation && fire) out = rotate(out, angle);
  }
  {
    const bool fire = rng.bernoulli(p);
    if (policy.hflip && fire) out = flip_horizontal(out);
  }
  {
    const bool fire = rng.bernoulli(p);
    if (policy.vflip && fire) out = flip_vertical(out);
  }
  {
    const bool fire = rng.bernoulli(p);
    const double tx = rng.uniform(-policy.translate_frac, policy.translate_frac) * out.width;
    const double ty = rng.uniform(-policy.translate_frac, policy.translate_frac) * out.height;
    if (policy.translation && fire) {
      out = translate(out, static_cast<int>(std::lround(tx)), static_cast<int>(std::lround(ty)));
    }
  }
  {
    const bool fire = rng.bernoulli(p);
    const double delta = rng.uniform(-policy.brightness_jitter, policy.brightness_jitter);
    if (policy.brightness && fire) out = adjust_brightness(out, delta);
  }
  {
    const bool fire = rng.bernoulli(p);
    const double factor = rng.uniform(1.0 - policy.contrast_jitter, 1.0 + policy.contrast_jitter);
    if (policy.contrast && fire) out = adjust_contrast(out, factor);
  }
  clamp_unit(out);
  return out;
}

}  // namespace soldernet::imaging
