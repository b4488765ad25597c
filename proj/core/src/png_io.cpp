#include "vccdsa/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "vccdsa/error.hpp"

namespace vccdsa {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

void write_gray(const std::filesystem::path& path, const ImageFrame& frame, int bit_depth) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng error while writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width()), static_cast<png_uint_32>(frame.height()),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int bytes = bit_depth / 8;
  const double full = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> row(static_cast<std::size_t>(frame.width()) * bytes);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const double v = std::clamp(static_cast<double>(frame(y, x)), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(full * v));
      if (bytes == 2) {
        row[2 * x] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
        row[2 * x + 1] = static_cast<png_byte>(q & 0xff);
      } else {
        row[x] = static_cast<png_byte>(q);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png16(const std::filesystem::path& path, const ImageFrame& frame) { write_gray(path, frame, 16); }

void write_png8(const std::filesystem::path& path, const ImageFrame& frame) { write_gray(path, frame, 8); }

ImageFrame read_png16(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng error while reading " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 16 && depth != 8)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("expected 8/16-bit grayscale PNG: " + path.string());
  }
  const int bytes = depth / 8;
  const double full = depth == 16 ? 65535.0 : 255.0;
  ImageFrame frame(static_cast<int>(height), static_cast<int>(width));
  std::vector<png_byte> row(static_cast<std::size_t>(width) * bytes);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x) {
      const unsigned q = bytes == 2 ? (static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1] : row[x];
      frame(static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(q / full);
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

}  // namespace vccdsa
