#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vccdsa {

// Batched feature tensor stored channel-major as [C][N][H][W], so the first k
// channels of a tensor form a contiguous prefix and channel concatenation is
// row stacking.
template <typename T>
struct FeatureMap {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<T> values;

  FeatureMap() = default;
  FeatureMap(int c, int n, int h, int w, T fill = T(0))
      : channels(c), batch(n), height(h), width(w),
        values(static_cast<std::size_t>(c) * n * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t channel_stride() const noexcept { return static_cast<std::size_t>(batch) * plane(); }

  T& at(int c, int n, int y, int x) noexcept {
    return values[static_cast<std::size_t>(c) * channel_stride() + static_cast<std::size_t>(n) * plane() +
                  static_cast<std::size_t>(y) * width + x];
  }
  T at(int c, int n, int y, int x) const noexcept {
    return values[static_cast<std::size_t>(c) * channel_stride() + static_cast<std::size_t>(n) * plane() +
                  static_cast<std::size_t>(y) * width + x];
  }

  T* channel(int c) noexcept { return values.data() + static_cast<std::size_t>(c) * channel_stride(); }
  const T* channel(int c) const noexcept { return values.data() + static_cast<std::size_t>(c) * channel_stride(); }
};

namespace ops {

// Scratch buffers reused across convolution calls.
template <typename T>
struct Workspace {
  std::vector<T> cols;
  std::vector<T> grad_cols;
};

// "Same" convolution (padding k/2), stride 1 or 2. `in` holds `cin` channels
// of an (n, h, w) batch; weights are [cout][cin][k][k].
template <typename T>
void conv2d_forward(const T* in, int cin, int n, int h, int w, const T* weight, const T* bias, int cout, int k,
                    int stride, T* out, Workspace<T>& ws);

// Accumulates parameter gradients into grad_weight / grad_bias and, when
// grad_in is non-null, input gradients into grad_in.
template <typename T>
void conv2d_backward(const T* in, int cin, int n, int h, int w, const T* weight, int cout, int k, int stride,
                     const T* grad_out, T* grad_weight, T* grad_bias, T* grad_in, Workspace<T>& ws);

template <typename T>
void relu_inplace(std::span<T> values);

// grad *= (activation > 0)
template <typename T>
void relu_backward(std::span<T> grad, std::span<const T> activation);

// Average pool by an integer factor; in (c, n, h, w) -> out (c, n, h/f, w/f).
template <typename T>
void avg_pool(const T* in, int c, int n, int h, int w, int factor, T* out);
template <typename T>
void avg_pool_backward(const T* grad_out, int c, int n, int h, int w, int factor, T* grad_in);

// Nearest-neighbour 2x upsampling; in (c, n, h, w) -> out (c, n, 2h, 2w).
template <typename T>
void upsample2(const T* in, int c, int n, int h, int w, T* out);
template <typename T>
void upsample2_backward(const T* grad_out, int c, int n, int h, int w, T* grad_in);

inline int conv_out_size(int size, int k, int stride) { return (size + 2 * (k / 2) - k) / stride + 1; }

}  // namespace ops

}  // namespace vccdsa
