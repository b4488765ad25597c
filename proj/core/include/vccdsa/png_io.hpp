#pragma once

#include <filesystem>

#include "vccdsa/image.hpp"

namespace vccdsa {

// 16-bit grayscale PNG, value = round(65535 * clamp(v, 0, 1)).
void write_png16(const std::filesystem::path& path, const ImageFrame& frame);
ImageFrame read_png16(const std::filesystem::path& path);

// 8-bit grayscale preview, value = round(255 * clamp(v, 0, 1)).
void write_png8(const std::filesystem::path& path, const ImageFrame& frame);

}  // namespace vccdsa
