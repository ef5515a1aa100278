#pragma once

#include <cstdint>

#include "soldernet/image.hpp"

namespace soldernet::imaging {

// Stretch-resizes (bilinear, aspect ratio not preserved) to 256x256 and divides
// by 255. Accepts 1, 3 or 4 channel input; output is always RGB.
NormalizedImage preprocess(const ImageU8& image);

// Bilinear resize of a float image with half-pixel centres and clamped edges.
ImageF resize_bilinear(const ImageF& src, int width, int height);

// Training-time augmentation. Each enabled op fires independently with
// `per_op_probability`; ops run in the order they are declared here.
struct AugmentPolicy {
  bool rotation = true;
  double rotation_min_deg = 0.0;
  double rotation_max_deg = 45.0;
  bool hflip = true;
  bool vflip = true;
  bool translation = true;
  double translate_frac = 0.10;
  bool brightness = true;
  double brightness_jitter = 0.20;
  bool contrast = true;
  double contrast_jitter = 0.20;
  double per_op_probability = 0.5;

  void validate() const;
};

NormalizedImage augment(const NormalizedImage& image, const AugmentPolicy& policy, std::uint64_t rng_seed);

// Individual ops, exposed for tests. Fill colour for uncovered pixels is the
// image mean colour.
NormalizedImage rotate(const NormalizedImage& image, double degrees);
NormalizedImage flip_horizontal(const NormalizedImage& image);
NormalizedImage flip_vertical(const NormalizedImage& image);
NormalizedImage translate(const NormalizedImage& image, int dx, int dy);
NormalizedImage adjust_brightness(const NormalizedImage& image, double delta);
NormalizedImage adjust_contrast(const NormalizedImage& image, double factor);

}  // namespace soldernet::imaging
