#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "edgespeech/tensor.hpp"

namespace edgespeech::net {

enum class Activation { ReLU };

struct ModelConfig {
  int depth = 4;
  int base_channels = 16;  // doubled at every encoder level
  int kernel_size = 8;
  int stride = 4;
  int lstm_layers = 2;
  int lstm_hidden = 128;
  Activation activation = Activation::ReLU;

  bool operator==(const ModelConfig&) const = default;

  void validate() const;  // throws InvalidConfig

  /// Channels entering encoder level `level` (0-based); level == depth gives
  /// the bottleneck width.
  std::size_t channels(int level) const;

  /// Smallest length >= t that every encoder stride divides exactly, so the
  /// decoder restores it: iterate t <- ceil((t - k) / s) + 1 (at least 1)
  /// depth times, then t <- (t - 1) * s + k depth times.
  std::size_t valid_length(std::size_t t) const;

  /// Shortest waveform model_forward accepts (one kernel).
  std::size_t min_length() const { return static_cast<std::size_t>(kernel_size); }
};

struct ConvLayerParams {
  Tensor weight;  // [out x in x k]
  Tensor bias;    // [out]
  std::size_t stride = 1;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

struct DeconvLayerParams {
  Tensor weight;  // [in x out x k]
  Tensor bias;    // [out]
  std::size_t stride = 1;

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

/// One LSTM layer. Gate rows are stacked i, f, g, o.
struct LstmLayerParams {
  Tensor w_ih;  // [4H x in]
  Tensor w_hh;  // [4H x H]
  Tensor b_ih;  // [4H]
  Tensor b_hh;  // [4H]

  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input() const { return w_ih.dim(1); }
};

struct LstmParams {
  std::vector<LstmLayerParams> layers;
};

/// Dense map applied independently at every time step.
struct LinearParams {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
};

/// Every trainable tensor. Decoder layers are stored in execution order
/// (deepest first).
struct Parameters {
  std::vector<ConvLayerParams> encoder;
  LstmParams lstm;
  LinearParams projection;  // LSTM hidden -> bottleneck channels
  std::vector<DeconvLayerParams> decoder;

  /// Visits tensors in declaration order with stable names such as
  /// "encoder.0.weight" or "lstm.1.w_hh".
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t count() const;
  /// Same structure with every element zero.
  Parameters zeros_like() const;
};

struct Model {
  ModelConfig config;
  Parameters params;
};

/// Uniform(-a, a) weights with a = sqrt(1 / fan_in), zero biases.
/// fan_in is in*k for conv, in*k for transposed conv, hidden for LSTM and
/// in for the projection.
Model init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Throws ShapeMismatch when the tensors do not match the config.
void check_model(const Model& model);

/// FNV-1a over the raw parameter bytes.
std::uint64_t fingerprint(const Parameters& params);

// Single layers, exposed for tests and tools.
Tensor conv1d_forward(const Tensor& input, const ConvLayerParams& layer);  // with ReLU
Tensor conv1d_preactivation(const Tensor& input, const ConvLayerParams& layer);
Tensor deconv1d_forward(const Tensor& input, const DeconvLayerParams& layer, bool apply_activation);
Tensor lstm_forward(const Tensor& seq, const LstmParams& params);  // [C x T] -> [H x T]
Tensor linear_forward(const Tensor& seq, const LinearParams& layer);

struct LstmLayerCache {
  std::size_t steps = 0;
  std::vector<double> input;  // [T x in], time-major
  std::vector<double> gates;  // [T x 4H] after the nonlinearities
  std::vector<double> cell;   // [T x H]
  std::vector<double> hidden; // [T x H]
};

/// Activations kept by model_forward for model_backward.
struct ForwardCache {
  std::uint64_t params_fingerprint = 0;
  std::size_t input_length = 0;
  Tensor padded_input;                  // [1 x valid_length]
  std::vector<Tensor> encoder_pre;      // pre-activation per level
  std::vector<Tensor> encoder_out;      // post-activation per level
  std::vector<LstmLayerCache> lstm;
  Tensor lstm_out;                      // [H x T]
  std::vector<Tensor> decoder_in;       // after adding the skip
  std::vector<Tensor> decoder_pre;
};

/// [1 x T] -> [1 x T]. Throws TooShort for T < min_length().
Tensor model_forward(const Model& model, const Tensor& waveform, ForwardCache* cache = nullptr);

struct Gradients {
  Parameters params;
  Tensor input;  // [1 x T]
};

/// Reverse-mode pass through the activations in `cache`. Throws StaleCache
/// when the parameters changed since the forward call or grad_output does
/// not match its length.
Gradients model_backward(const Model& model, const ForwardCache& cache, const Tensor& grad_output);

// Layer-level backward passes used by model_backward and the gradient checks.
struct LayerGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
LayerGrads conv1d_backward(const Tensor& input, const ConvLayerParams& layer, const Tensor& grad_pre);
LayerGrads deconv1d_backward(const Tensor& input, const DeconvLayerParams& layer, const Tensor& grad_pre);

struct LstmGrads {
  Tensor input;  // [C x T]
  LstmParams params;
};
/// Gradients of sum(grad_out * lstm_forward(seq)) for a [H x T] grad_out.
LstmGrads lstm_backward(const Tensor& seq, const LstmParams& params, const Tensor& grad_out);

}  // namespace edgespeech::net
