#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace vccdsa {

// Single-channel attenuation map, row-major. Dimensions must satisfy
// height, width >= 16 and divisible by 8 so three 2x downsamples are exact.
class ImageFrame {
 public:
  ImageFrame() = default;
  ImageFrame(int height, int width, float fill = 0.0f);

  static void validate_dims(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  float& operator()(int y, int x) noexcept { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float operator()(int y, int x) const noexcept { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }
  float* data() noexcept { return values_.data(); }
  const float* data() const noexcept { return values_.data(); }

  bool same_shape(const ImageFrame& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Clamps every value into [lo, hi] in place.
  ImageFrame& clip(float lo = 0.0f, float hi = 1.0f) noexcept;

  bool all_finite() const noexcept;
  float min_value() const noexcept;
  float max_value() const noexcept;
  double mean() const noexcept;

  bool operator==(const ImageFrame& other) const noexcept = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

// Throws ArgumentError naming `what` when shapes differ.
void require_same_shape(const ImageFrame& a, const ImageFrame& b, std::string_view what);

ImageFrame clipped(ImageFrame frame, float lo = 0.0f, float hi = 1.0f);

double max_abs_diff(const ImageFrame& a, const ImageFrame& b);
double mean_abs_diff(const ImageFrame& a, const ImageFrame& b);

// Cuts a (size_y x size_x) window whose top-left corner is (y0, x0).
ImageFrame crop(const ImageFrame& frame, int y0, int x0, int size_y, int size_x);

}  // namespace vccdsa
