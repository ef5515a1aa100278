#pragma once

#include <filesystem>
#include <string>

#include "soldernet/image.hpp"

namespace soldernet {

// PNG I/O through libpng. Supported channel counts: 1 (gray), 3 (RGB), 4 (RGBA).
// Reading always expands palette/16-bit inputs to 8-bit; gray inputs read as
// 1 channel, everything else as RGB or RGBA.
ImageU8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageU8& img);

// Single-channel 0/255 PNG.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

// In-memory encode, used to serve images over HTTP.
std::string encode_png(const ImageU8& img);

}  // namespace soldernet
