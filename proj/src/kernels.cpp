#include "edgespeech/kernels.hpp"

#include <algorithm>
#include <vector>

namespace edgespeech::kernels {

namespace {

using Index = std::ptrdiff_t;

// col[t, i*K + k] = x[i, t*S + k]
template <typename T>
void im2col(const ConvShape& s, const T* x, T* col) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(out_t); ++t) {
    T* row = col + static_cast<std::size_t>(t) * patch;
    const std::size_t start = static_cast<std::size_t>(t) * s.stride;
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      const T* src = x + i * s.in_time + start;
      std::copy(src, src + s.kernel, row + i * s.kernel);
    }
  }
}

// x[c, t*S + k] += col[t, c*K + k]; parallel over channels, t ascending.
void col2im_add(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t cols,
                std::size_t out_time, const double* col, double* x) {
  const std::size_t patch = channels * kernel;
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(channels); ++c) {
    double* dst = x + static_cast<std::size_t>(c) * out_time;
    for (std::size_t t = 0; t < cols; ++t) {
      const double* src = col + t * patch + static_cast<std::size_t>(c) * kernel;
      double* d = dst + t * stride;
      for (std::size_t k = 0; k < kernel; ++k) d[k] += src[k];
    }
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t j = 0; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

inline void axpy(double a, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

inline std::int32_t dot_i8(const std::int8_t* a, const std::int8_t* b, std::size_t n) {
  std::int32_t acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t j = 0; j < n; ++j) acc += static_cast<std::int32_t>(a[j]) * static_cast<std::int32_t>(b[j]);
  return acc;
}

}  // namespace

// ---------------------------------------------------------------- conv1d

void conv1d(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  std::vector<double> col(out_t * patch);
  im2col(s, x, col.data());

  constexpr std::size_t kBlock = 4;
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < static_cast<Index>(s.out_channels); ++o) {
    const double* wr = w + static_cast<std::size_t>(o) * patch;
    double* yr = y + static_cast<std::size_t>(o) * out_t;
    const double bias = b ? b[o] : 0.0;
    std::size_t t = 0;
    for (; t + kBlock <= out_t; t += kBlock) {
      const double* c0 = col.data() + t * patch;
      const double* c1 = c0 + patch;
      const double* c2 = c1 + patch;
      const double* c3 = c2 + patch;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
      for (std::size_t j = 0; j < patch; ++j) {
        a0 += wr[j] * c0[j];
        a1 += wr[j] * c1[j];
        a2 += wr[j] * c2[j];
        a3 += wr[j] * c3[j];
      }
      yr[t] = bias + a0;
      yr[t + 1] = bias + a1;
      yr[t + 2] = bias + a2;
      yr[t + 3] = bias + a3;
    }
    for (; t < out_t; ++t) yr[t] = bias + dot(wr, col.data() + t * patch, patch);
  }
}

void conv1d_serial(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
  const std::size_t out_t = s.out_time();
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_t; ++t) {
      double acc = b ? b[o] : 0.0;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          acc += w[(o * s.in_channels + i) * s.kernel + k] * x[i * s.in_time + t * s.stride + k];
        }
      }
      y[o * out_t + t] = acc;
    }
  }
}

void conv1d_backward(const ConvShape& s, const double* x, const double* w, const double* grad_y, double* grad_x,
                     double* grad_w, double* grad_b) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  std::vector<double> col(out_t * patch);
  im2col(s, x, col.data());

#pragma omp parallel for schedule(static)
  for (Index o = 0; o < static_cast<Index>(s.out_channels); ++o) {
    const double* g = grad_y + static_cast<std::size_t>(o) * out_t;
    double* gw = grad_w + static_cast<std::size_t>(o) * patch;
    std::fill(gw, gw + patch, 0.0);
    double gb = 0.0;
    for (std::size_t t = 0; t < out_t; ++t) {
      gb += g[t];
      if (g[t] != 0.0) axpy(g[t], col.data() + t * patch, gw, patch);
    }
    if (grad_b) grad_b[o] = gb;
  }

  if (!grad_x) return;
  // Reuse the column buffer for dL/dcol.
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(out_t); ++t) {
    double* row = col.data() + static_cast<std::size_t>(t) * patch;
    std::fill(row, row + patch, 0.0);
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const double g = grad_y[o * out_t + static_cast<std::size_t>(t)];
      if (g != 0.0) axpy(g, w + o * patch, row, patch);
    }
  }
  std::fill(grad_x, grad_x + s.in_channels * s.in_time, 0.0);
  col2im_add(s.in_channels, s.kernel, s.stride, out_t, s.in_time, col.data(), grad_x);
}

void conv1d_backward_serial(const ConvShape& s, const double* x, const double* w, const double* grad_y,
                            double* grad_x, double* grad_w, double* grad_b) {
  const std::size_t out_t = s.out_time();
  std::fill(grad_w, grad_w + s.out_channels * s.patch(), 0.0);
  if (grad_b) std::fill(grad_b, grad_b + s.out_channels, 0.0);
  if (grad_x) std::fill(grad_x, grad_x + s.in_channels * s.in_time, 0.0);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_t; ++t) {
      const double g = grad_y[o * out_t + t];
      if (grad_b) grad_b[o] += g;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::size_t wi = (o * s.in_channels + i) * s.kernel + k;
          const std::size_t xi = i * s.in_time + t * s.stride + k;
          grad_w[wi] += g * x[xi];
          if (grad_x) grad_x[xi] += g * w[wi];
        }
      }
    }
  }
}

// -------------------------------------------------------------- deconv1d

void deconv1d(const DeconvShape& s, const double* x, const double* w, const double* b, double* y) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  std::vector<double> col(s.in_time * patch);
  // col[t, o*K + k] = sum_i x[i, t] * w[i, o*K + k]
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(s.in_time); ++t) {
    double* row = col.data() + static_cast<std::size_t>(t) * patch;
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      const double a = x[i * s.in_time + static_cast<std::size_t>(t)];
      if (a != 0.0) axpy(a, w + i * patch, row, patch);
    }
  }
  for (std::size_t o = 0; o < s.out_channels; ++o) std::fill(y + o * out_t, y + (o + 1) * out_t, b ? b[o] : 0.0);
  col2im_add(s.out_channels, s.kernel, s.stride, s.in_time, out_t, col.data(), y);
}

void deconv1d_serial(const DeconvShape& s, const double* x, const double* w, const double* b, double* y) {
  const std::size_t out_t = s.out_time();
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_t; ++t) y[o * out_t + t] = b ? b[o] : 0.0;
  }
  for (std::size_t i = 0; i < s.in_channels; ++i) {
    for (std::size_t t = 0; t < s.in_time; ++t) {
      const double a = x[i * s.in_time + t];
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          y[o * out_t + t * s.stride + k] += a * w[(i * s.out_channels + o) * s.kernel + k];
        }
      }
    }
  }
}

void deconv1d_backward(const DeconvShape& s, const double* x, const double* w, const double* grad_y,
                       double* grad_x, double* grad_w, double* grad_b) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  // gcol[t, o*K + k] = grad_y[o, t*S + k]: an im2col of grad_y.
  const ConvShape view{s.out_channels, 1, s.kernel, s.stride, out_t};
  std::vector<double> gcol(s.in_time * patch);
  im2col(view, grad_y, gcol.data());

  if (grad_b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      double acc = 0.0;
      for (std::size_t t = 0; t < out_t; ++t) acc += grad_y[o * out_t + t];
      grad_b[o] = acc;
    }
  }

#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(s.in_channels); ++i) {
    const double* wr = w + static_cast<std::size_t>(i) * patch;
    const double* xr = x + static_cast<std::size_t>(i) * s.in_time;
    double* gw = grad_w + static_cast<std::size_t>(i) * patch;
    std::fill(gw, gw + patch, 0.0);
    for (std::size_t t = 0; t < s.in_time; ++t) {
      const double* g = gcol.data() + t * patch;
      if (grad_x) grad_x[static_cast<std::size_t>(i) * s.in_time + t] = dot(wr, g, patch);
      if (xr[t] != 0.0) axpy(xr[t], g, gw, patch);
    }
  }
}

void deconv1d_backward_serial(const DeconvShape& s, const double* x, const double* w, const double* grad_y,
                              double* grad_x, double* grad_w, double* grad_b) {
  const std::size_t out_t = s.out_time();
  std::fill(grad_w, grad_w + s.in_channels * s.patch(), 0.0);
  if (grad_x) std::fill(grad_x, grad_x + s.in_channels * s.in_time, 0.0);
  if (grad_b) {
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      grad_b[o] = 0.0;
      for (std::size_t t = 0; t < out_t; ++t) grad_b[o] += grad_y[o * out_t + t];
    }
  }
  for (std::size_t i = 0; i < s.in_channels; ++i) {
    for (std::size_t t = 0; t < s.in_time; ++t) {
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::size_t wi = (i * s.out_channels + o) * s.kernel + k;
          const double g = grad_y[o * out_t + t * s.stride + k];
          grad_w[wi] += x[i * s.in_time + t] * g;
          if (grad_x) grad_x[i * s.in_time + t] += w[wi] * g;
        }
      }
    }
  }
}

// ------------------------------------------------------------ int8 paths

void conv1d_int8(const ConvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  std::vector<std::int8_t> col(out_t * patch);
  im2col(s, x, col.data());
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < static_cast<Index>(s.out_channels); ++o) {
    const std::int8_t* wr = w + static_cast<std::size_t>(o) * patch;
    std::int32_t* out = acc + static_cast<std::size_t>(o) * out_t;
    for (std::size_t t = 0; t < out_t; ++t) out[t] = dot_i8(wr, col.data() + t * patch, patch);
  }
}

void conv1d_int8_serial(const ConvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc) {
  const std::size_t out_t = s.out_time();
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_t; ++t) {
      std::int32_t a = 0;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          a += static_cast<std::int32_t>(w[(o * s.in_channels + i) * s.kernel + k]) *
               static_cast<std::int32_t>(x[i * s.in_time + t * s.stride + k]);
        }
      }
      acc[o * out_t + t] = a;
    }
  }
}

void deconv1d_int8(const DeconvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc) {
  const std::size_t out_t = s.out_time();
  const std::size_t patch = s.patch();
  std::vector<std::int32_t> col(s.in_time * patch, 0);
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(s.in_time); ++t) {
    std::int32_t* row = col.data() + static_cast<std::size_t>(t) * patch;
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      const std::int32_t a = x[i * s.in_time + static_cast<std::size_t>(t)];
      if (a == 0) continue;
      const std::int8_t* wr = w + i * patch;
#pragma omp simd
      for (std::size_t j = 0; j < patch; ++j) row[j] += a * static_cast<std::int32_t>(wr[j]);
    }
  }
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < static_cast<Index>(s.out_channels); ++o) {
    std::int32_t* dst = acc + static_cast<std::size_t>(o) * out_t;
    std::fill(dst, dst + out_t, 0);
    for (std::size_t t = 0; t < s.in_time; ++t) {
      const std::int32_t* src = col.data() + t * patch + static_cast<std::size_t>(o) * s.kernel;
      for (std::size_t k = 0; k < s.kernel; ++k) dst[t * s.stride + k] += src[k];
    }
  }
}

void deconv1d_int8_serial(const DeconvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc) {
  const std::size_t out_t = s.out_time();
  std::fill(acc, acc + s.out_channels * out_t, 0);
  for (std::size_t i = 0; i < s.in_channels; ++i) {
    for (std::size_t t = 0; t < s.in_time; ++t) {
      const std::int32_t a = x[i * s.in_time + t];
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        for (std::size_t k = 0; k < s.kernel; ++k) {
          acc[o * out_t + t * s.stride + k] += a * static_cast<std::int32_t>(w[(i * s.out_channels + o) * s.kernel + k]);
        }
      }
    }
  }
}

}  // namespace edgespeech::kernels
