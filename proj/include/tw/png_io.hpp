#pragma once

#include "tw/image.hpp"

#include <filesystem>

namespace tw {

void save_png_rgb(const std::filesystem::path& path, const ImageRGB8& image);
ImageRGB8 load_png_rgb(const std::filesystem::path& path);

// Masks round-trip as 8-bit grayscale, 0 / 255.
void save_png_mask(const std::filesystem::path& path, const Mask& mask);
Mask load_png_mask(const std::filesystem::path& path);

}  // namespace tw
