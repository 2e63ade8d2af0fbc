#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edgespeech/net.hpp"

namespace edgespeech::quant {

/// Symmetric per-tensor int8: value ~= q * scale, q in [-127, 127].
struct QuantizedTensor {
  std::vector<std::int8_t> values;
  double scale = 1.0;
  std::vector<std::size_t> shape;
};

/// scale = max|t| / 127 (1.0 for an all-zero tensor); q = clamp(round(t / scale))
/// with ties away from zero. Throws NonFinite.
QuantizedTensor quantize_tensor(const Tensor& t);
Tensor dequantize_tensor(const QuantizedTensor& qt);

/// max|input| / 127, or 1.0 for a zero input. Throws NonFinite.
double dynamic_activation_scale(const Tensor& input);

struct QuantizedConvLayer {
  QuantizedTensor weight;  // [out x in x k]
  Tensor bias;             // kept in floating point
  std::size_t stride = 1;
};

struct QuantizedDeconvLayer {
  QuantizedTensor weight;  // [in x out x k]
  Tensor bias;
  std::size_t stride = 1;
};

struct QuantizedLinear {
  QuantizedTensor weight;  // [out x in]
  Tensor bias;
};

/// Input quantized with a per-call scale, int8 x int8 products summed in
/// int32, rescaled by input_scale * weight_scale, bias added, then ReLU when
/// requested. Throws ShapeMismatch or AccumulatorOverflow.
Tensor quantized_conv1d_forward(const Tensor& input, const QuantizedConvLayer& layer, bool apply_activation = true);
Tensor quantized_deconv1d_forward(const Tensor& input, const QuantizedDeconvLayer& layer, bool apply_activation);
Tensor quantized_linear_forward(const Tensor& input, const QuantizedLinear& layer);

/// Convolution, transposed convolution and linear weights in int8; biases
/// and the LSTM stay in floating point. Layer order matches the source.
struct QuantizedModel {
  net::ModelConfig config;
  std::vector<QuantizedConvLayer> encoder;
  net::LstmParams lstm;
  QuantizedLinear projection;
  std::vector<QuantizedDeconvLayer> decoder;
};

QuantizedModel quantize_model(const net::Model& model);

/// The same forward graph as net::model_forward with the quantized layers.
Tensor quantized_model_forward(const QuantizedModel& model, const Tensor& waveform);

/// Weights replaced by their dequantized values, as a float model.
net::Model dequantize_model(const QuantizedModel& model);

struct FootprintEntry {
  std::string name;      // e.g. "encoder.0.weight"
  std::size_t elements = 0;
  std::size_t bytes = 0;
  bool int8 = false;
  bool conv = false;     // belongs to a convolution or transposed convolution layer
};

/// Parameter bytes: 4 per float element, 1 per int8 element plus 4 for the
/// tensor's scale.
struct Footprint {
  std::vector<FootprintEntry> entries;

  std::size_t total_bytes() const;
  /// Bytes of conv/deconv layers (weight + bias) holding at least
  /// `min_params` parameters.
  std::size_t conv_bytes(std::size_t min_params = 100) const;
};

Footprint model_footprint(const net::Model& model);
Footprint model_footprint(const QuantizedModel& model);

/// Worst-case int32 accumulator use of every quantized layer; throws
/// AccumulatorOverflow if any exceeds INT32_MAX.
void check_accumulators(const QuantizedModel& model);

/// ||a - ref|| / ||ref|| (0 when both are zero).
double relative_l2(const Tensor& a, const Tensor& ref);

}  // namespace edgespeech::quant
