#include <Eigen/Dense>

#include <algorithm>
#include <cstring>

#include "vccdsa/tensor.hpp"

namespace vccdsa::ops {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Valid output range [lo, hi) along one axis for kernel offset `kk`.
inline void valid_range(int out_size, int in_size, int kk, int pad, int stride, int& lo, int& hi) {
  // need 0 <= o*stride + kk - pad < in_size
  const int off = kk - pad;
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  hi = (in_size - off + stride - 1) / stride;
  hi = std::clamp(hi, 0, out_size);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const T* in, int cin, int n, int h, int w, int k, int stride, int ho, int wo, T* cols) {
  const int pad = k / 2;
  const std::size_t ncols = static_cast<std::size_t>(n) * ho * wo;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < cin; ++c) {
    const T* src_c = in + static_cast<std::size_t>(c) * n * plane;
    for (int ky = 0; ky < k; ++ky) {
      int oy_lo, oy_hi;
      valid_range(ho, h, ky, pad, stride, oy_lo, oy_hi);
      for (int kx = 0; kx < k; ++kx) {
        int ox_lo, ox_hi;
        valid_range(wo, w, kx, pad, stride, ox_lo, ox_hi);
        T* dst = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * ncols;
        for (int b = 0; b < n; ++b) {
          const T* src_b = src_c + b * plane;
          T* dst_b = dst + static_cast<std::size_t>(b) * ho * wo;
          for (int oy = 0; oy < ho; ++oy) {
            T* d = dst_b + static_cast<std::size_t>(oy) * wo;
            if (oy < oy_lo || oy >= oy_hi) {
              std::fill(d, d + wo, T(0));
              continue;
            }
            const T* s = src_b + static_cast<std::size_t>(oy * stride + ky - pad) * w;
            std::fill(d, d + ox_lo, T(0));
            if (stride == 1) {
              std::memcpy(d + ox_lo, s + ox_lo + kx - pad, sizeof(T) * (ox_hi - ox_lo));
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) d[ox] = s[ox * stride + kx - pad];
            }
            std::fill(d + ox_hi, d + wo, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int cin, int n, int h, int w, int k, int stride, int ho, int wo, T* out) {
  const int pad = k / 2;
  const std::size_t ncols = static_cast<std::size_t>(n) * ho * wo;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < cin; ++c) {
    T* dst_c = out + static_cast<std::size_t>(c) * n * plane;
    for (int ky = 0; ky < k; ++ky) {
      int oy_lo, oy_hi;
      valid_range(ho, h, ky, pad, stride, oy_lo, oy_hi);
      for (int kx = 0; kx < k; ++kx) {
        int ox_lo, ox_hi;
        valid_range(wo, w, kx, pad, stride, ox_lo, ox_hi);
        const T* src = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * ncols;
        for (int b = 0; b < n; ++b) {
          T* dst_b = dst_c + b * plane;
          const T* src_b = src + static_cast<std::size_t>(b) * ho * wo;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const T* s = src_b + static_cast<std::size_t>(oy) * wo;
            T* d = dst_b + static_cast<std::size_t>(oy * stride + ky - pad) * w;
            if (stride == 1) {
              T* dd = d + kx - pad;
              for (int ox = ox_lo; ox < ox_hi; ++ox) dd[ox] += s[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) d[ox * stride + kx - pad] += s[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const T* in, int cin, int n, int h, int w, const T* weight, const T* bias, int cout, int k,
                    int stride, T* out, Workspace<T>& ws) {
  const int ho = conv_out_size(h, k, stride);
  const int wo = conv_out_size(w, k, stride);
  const Eigen::Index kdim = static_cast<Eigen::Index>(cin) * k * k;
  const Eigen::Index ncols = static_cast<Eigen::Index>(n) * ho * wo;
  ws.cols.resize(static_cast<std::size_t>(kdim * ncols));
  im2col(in, cin, n, h, w, k, stride, ho, wo, ws.cols.data());
  ConstMatMap<T> wm(weight, cout, kdim);
  ConstMatMap<T> cm(ws.cols.data(), kdim, ncols);
  MatMap<T> om(out, cout, ncols);
  om.noalias() = wm * cm;
  if (bias) {
    for (int o = 0; o < cout; ++o) om.row(o).array() += bias[o];
  }
}

template <typename T>
void conv2d_backward(const T* in, int cin, int n, int h, int w, const T* weight, int cout, int k, int stride,
                     const T* grad_out, T* grad_weight, T* grad_bias, T* grad_in, Workspace<T>& ws) {
  const int ho = conv_out_size(h, k, stride);
  const int wo = conv_out_size(w, k, stride);
  const Eigen::Index kdim = static_cast<Eigen::Index>(cin) * k * k;
  const Eigen::Index ncols = static_cast<Eigen::Index>(n) * ho * wo;
  ws.cols.resize(static_cast<std::size_t>(kdim * ncols));
  im2col(in, cin, n, h, w, k, stride, ho, wo, ws.cols.data());
  ConstMatMap<T> gm(grad_out, cout, ncols);
  ConstMatMap<T> cm(ws.cols.data(), kdim, ncols);
  MatMap<T> gw(grad_weight, cout, kdim);
  gw.noalias() += gm * cm.transpose();
  if (grad_bias) {
    // Plain loop: Eigen's vectorized sum peels by address alignment, which makes
    // the summation order (and the last bits) depend on where the buffer lives.
    for (int o = 0; o < cout; ++o) {
      const T* row = grad_out + static_cast<std::size_t>(o) * ncols;
      double s = 0.0;
      for (Eigen::Index c = 0; c < ncols; ++c) s += row[c];
      grad_bias[o] += static_cast<T>(s);
    }
  }
  if (grad_in) {
    ws.grad_cols.resize(static_cast<std::size_t>(kdim * ncols));
    MatMap<T> gc(ws.grad_cols.data(), kdim, ncols);
    ConstMatMap<T> wm(weight, cout, kdim);
    gc.noalias() = wm.transpose() * gm;
    col2im_add(ws.grad_cols.data(), cin, n, h, w, k, stride, ho, wo, grad_in);
  }
}

template <typename T>
void relu_inplace(std::span<T> values) {
  for (T& v : values) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward(std::span<T> grad, std::span<const T> activation) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(activation[i] > T(0))) grad[i] = T(0);
  }
}

template <typename T>
void avg_pool(const T* in, int c, int n, int h, int w, int factor, T* out) {
  const int ho = h / factor, wo = w / factor;
  const T norm = T(1) / static_cast<T>(factor * factor);
  for (int p = 0; p < c * n; ++p) {
    const T* src = in + static_cast<std::size_t>(p) * h * w;
    T* dst = out + static_cast<std::size_t>(p) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T s = 0;
        for (int dy = 0; dy < factor; ++dy) {
          const T* row = src + static_cast<std::size_t>(oy * factor + dy) * w + ox * factor;
          for (int dx = 0; dx < factor; ++dx) s += row[dx];
        }
        dst[oy * wo + ox] = s * norm;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const T* grad_out, int c, int n, int h, int w, int factor, T* grad_in) {
  const int ho = h / factor, wo = w / factor;
  const T norm = T(1) / static_cast<T>(factor * factor);
  for (int p = 0; p < c * n; ++p) {
    const T* src = grad_out + static_cast<std::size_t>(p) * ho * wo;
    T* dst = grad_in + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) dst[static_cast<std::size_t>(y) * w + x] += src[(y / factor) * wo + x / factor] * norm;
    }
  }
}

template <typename T>
void upsample2(const T* in, int c, int n, int h, int w, T* out) {
  const int wo = 2 * w;
  for (int p = 0; p < c * n; ++p) {
    const T* src = in + static_cast<std::size_t>(p) * h * w;
    T* dst = out + static_cast<std::size_t>(p) * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      T* r0 = dst + static_cast<std::size_t>(2 * y) * wo;
      for (int x = 0; x < w; ++x) {
        r0[2 * x] = src[y * w + x];
        r0[2 * x + 1] = src[y * w + x];
      }
      std::memcpy(r0 + wo, r0, sizeof(T) * wo);
    }
  }
}

template <typename T>
void upsample2_backward(const T* grad_out, int c, int n, int h, int w, T* grad_in) {
  const int wo = 2 * w;
  for (int p = 0; p < c * n; ++p) {
    const T* src = grad_out + static_cast<std::size_t>(p) * 4 * h * w;
    T* dst = grad_in + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      const T* r0 = src + static_cast<std::size_t>(2 * y) * wo;
      const T* r1 = r0 + wo;
      for (int x = 0; x < w; ++x) dst[y * w + x] += r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
    }
  }
}

#define VCCDSA_INSTANTIATE_OPS(T)                                                                              \
  template void conv2d_forward<T>(const T*, int, int, int, int, const T*, const T*, int, int, int, T*,        \
                                  Workspace<T>&);                                                             \
  template void conv2d_backward<T>(const T*, int, int, int, int, const T*, int, int, int, const T*, T*, T*,   \
                                   T*, Workspace<T>&);                                                        \
  template void relu_inplace<T>(std::span<T>);                                                                \
  template void relu_backward<T>(std::span<T>, std::span<const T>);                                           \
  template void avg_pool<T>(const T*, int, int, int, int, int, T*);                                           \
  template void avg_pool_backward<T>(const T*, int, int, int, int, int, T*);                                  \
  template void upsample2<T>(const T*, int, int, int, int, T*);                                               \
  template void upsample2_backward<T>(const T*, int, int, int, int, T*);

VCCDSA_INSTANTIATE_OPS(float)
VCCDSA_INSTANTIATE_OPS(double)

#undef VCCDSA_INSTANTIATE_OPS

}  // namespace vccdsa::ops
