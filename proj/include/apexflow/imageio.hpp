#pragma once

#include <filesystem>

#include "apexflow/image.hpp"

namespace apexflow::io {

/// Decode a PNG/JPEG file to grayscale in [0, 1]. Colour inputs are reduced
/// with luma weights 0.299 R + 0.587 G + 0.114 B; 16-bit inputs are scaled by
/// 65535. Throws IoError when the file is missing or cannot be decoded.
GrayImage read_gray(const std::filesystem::path& path);

/// Write an 8-bit grayscale PNG, values clamped to [0, 1] and rounded.
void write_gray_png(const std::filesystem::path& path, const GrayImage& image);

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace apexflow::io
