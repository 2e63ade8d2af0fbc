#pragma once

// Raw 1-D convolution kernels. Each operation has an OpenMP version (the one
// the network uses) and a straightforward serial reference kept for testing
// and benchmarking. Parallel versions assign every output element to exactly
// one thread with a fixed reduction order, so results do not depend on the
// thread count.

#include <cstddef>
#include <cstdint>

namespace edgespeech::kernels {

/// Valid (unpadded) strided cross-correlation geometry.
struct ConvShape {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t in_time = 0;

  std::size_t out_time() const { return in_time < kernel ? 0 : (in_time - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel; }
};

/// Transposed convolution geometry: out_time = (in_time - 1) * stride + kernel.
struct DeconvShape {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t in_time = 0;

  std::size_t out_time() const { return in_time == 0 ? 0 : (in_time - 1) * stride + kernel; }
  std::size_t patch() const { return out_channels * kernel; }
};

// y[o, t] = b[o] + sum_{i,k} w[o, i, k] * x[i, t*stride + k]
// x: [in x in_time], w: [out x in x kernel], b: [out] (nullable), y: [out x out_time]
void conv1d(const ConvShape& s, const double* x, const double* w, const double* b, double* y);
void conv1d_serial(const ConvShape& s, const double* x, const double* w, const double* b, double* y);

// Gradients of conv1d given dL/dy. Outputs are overwritten; grad_x may be null.
void conv1d_backward(const ConvShape& s, const double* x, const double* w, const double* grad_y, double* grad_x,
                     double* grad_w, double* grad_b);
void conv1d_backward_serial(const ConvShape& s, const double* x, const double* w, const double* grad_y,
                            double* grad_x, double* grad_w, double* grad_b);

// y[o, t*stride + k] += x[i, t] * w[i, o, k], plus b[o]
// x: [in x in_time], w: [in x out x kernel], b: [out] (nullable), y: [out x out_time]
void deconv1d(const DeconvShape& s, const double* x, const double* w, const double* b, double* y);
void deconv1d_serial(const DeconvShape& s, const double* x, const double* w, const double* b, double* y);

void deconv1d_backward(const DeconvShape& s, const double* x, const double* w, const double* grad_y,
                       double* grad_x, double* grad_w, double* grad_b);
void deconv1d_backward_serial(const DeconvShape& s, const double* x, const double* w, const double* grad_y,
                              double* grad_x, double* grad_w, double* grad_b);

// Integer paths: int8 operands, int32 accumulators, no bias.
void conv1d_int8(const ConvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc);
void conv1d_int8_serial(const ConvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc);
void deconv1d_int8(const DeconvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc);
void deconv1d_int8_serial(const DeconvShape& s, const std::int8_t* x, const std::int8_t* w, std::int32_t* acc);

/// Largest |accumulator| an int8 x int8 reduction of `terms` products can reach.
constexpr std::int64_t worst_case_accumulator(std::size_t terms) {
  return static_cast<std::int64_t>(terms) * 127 * 127;
}

}  // namespace edgespeech::kernels
