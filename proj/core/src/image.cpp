#include "vccdsa/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vccdsa/error.hpp"

namespace vccdsa {

ImageFrame::ImageFrame(int height, int width, float fill) : height_(height), width_(width) {
  validate_dims(height, width);
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

void ImageFrame::validate_dims(int height, int width) {
  if (height < 16 || width < 16 || height % 8 != 0 || width % 8 != 0) {
    throw ArgumentError("frame dimensions must be >= 16 and divisible by 8, got " +
                        std::to_string(height) + "x" + std::to_string(width));
  }
}

ImageFrame& ImageFrame::clip(float lo, float hi) noexcept {
  for (float& v : values_) v = std::clamp(v, lo, hi);
  return *this;
}

bool ImageFrame::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

float ImageFrame::min_value() const noexcept {
  return values_.empty() ? 0.0f : *std::min_element(values_.begin(), values_.end());
}

float ImageFrame::max_value() const noexcept {
  return values_.empty() ? 0.0f : *std::max_element(values_.begin(), values_.end());
}

double ImageFrame::mean() const noexcept {
  if (values_.empty()) return 0.0;
  double s = 0.0;
  for (float v : values_) s += v;
  return s / static_cast<double>(values_.size());
}

void require_same_shape(const ImageFrame& a, const ImageFrame& b, std::string_view what) {
  if (!a.same_shape(b) || a.empty()) {
    throw ArgumentError(std::string(what) + ": frame shapes differ (" + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()) + ")");
  }
}

ImageFrame clipped(ImageFrame frame, float lo, float hi) {
  frame.clip(lo, hi);
  return frame;
}

double max_abs_diff(const ImageFrame& a, const ImageFrame& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  }
  return m;
}

double mean_abs_diff(const ImageFrame& a, const ImageFrame& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  }
  return s / static_cast<double>(a.size());
}

ImageFrame crop(const ImageFrame& frame, int y0, int x0, int size_y, int size_x) {
  if (y0 < 0 || x0 < 0 || y0 + size_y > frame.height() || x0 + size_x > frame.width()) {
    throw ArgumentError("crop window outside frame");
  }
  ImageFrame out(size_y, size_x);
  for (int y = 0; y < size_y; ++y) {
    const float* src = frame.data() + static_cast<std::size_t>(y0 + y) * frame.width() + x0;
    std::copy(src, src + size_x, out.data() + static_cast<std::size_t>(y) * size_x);
  }
  return out;
}

}  // namespace vccdsa
