#include "edgespeech/quant.hpp"

#include <algorithm>
#include <climits>
#include <cmath>

#include "edgespeech/error.hpp"
#include "edgespeech/kernels.hpp"

namespace edgespeech::quant {

namespace {

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) {
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "cannot quantize a non-finite value");
    m = std::max(m, std::abs(v));
  }
  return m;
}

std::int8_t to_int8(double x, double scale) {
  const double q = std::round(x / scale);
  return static_cast<std::int8_t>(std::clamp(q, -127.0, 127.0));
}

std::vector<std::int8_t> quantize_values(const Tensor& t, double scale) {
  std::vector<std::int8_t> q(t.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = to_int8(t.data[i], scale);
  return q;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

void check_budget(std::size_t terms, const std::string& layer) {
  if (kernels::worst_case_accumulator(terms) > INT32_MAX) {
    fail(ErrorCode::AccumulatorOverflow, layer + " sums " + std::to_string(terms) +
                                             " int8 products, which can exceed 31 bits");
  }
}

std::size_t deconv_terms(const QuantizedDeconvLayer& l) {
  const std::size_t in = l.weight.shape[0];
  const std::size_t k = l.weight.shape[2];
  return in * ((k + l.stride - 1) / l.stride);
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

Tensor rescale(const std::vector<std::int32_t>& acc, std::vector<std::size_t> shape, double scale,
               const Tensor& bias, bool apply_activation) {
  Tensor out(std::move(shape));
  const std::size_t channels = out.dim(0);
  const std::size_t t_len = out.dim(1);
  for (std::size_t c = 0; c < channels; ++c) {
    const double b = bias.data[c];
    for (std::size_t t = 0; t < t_len; ++t) {
      out.data[c * t_len + t] = static_cast<double>(acc[c * t_len + t]) * scale + b;
    }
  }
  if (apply_activation) relu_inplace(out);
  return out;
}

QuantizedConvLayer quantize_layer(const net::ConvLayerParams& l) {
  return {quantize_tensor(l.weight), l.bias, l.stride};
}

QuantizedDeconvLayer quantize_layer(const net::DeconvLayerParams& l) {
  return {quantize_tensor(l.weight), l.bias, l.stride};
}

void add_entry(Footprint& f, std::string name, std::size_t elements, bool int8, bool conv) {
  const std::size_t bytes = int8 ? elements + 4 : 4 * elements;
  f.entries.push_back({std::move(name), elements, bytes, int8, conv});
}

}  // namespace

QuantizedTensor quantize_tensor(const Tensor& t) {
  const double m = max_abs(t);
  QuantizedTensor qt;
  qt.shape = t.shape;
  qt.scale = m > 0.0 ? m / 127.0 : 1.0;
  qt.values = quantize_values(t, qt.scale);
  return qt;
}

Tensor dequantize_tensor(const QuantizedTensor& qt) {
  Tensor t(qt.shape);
  require(t.size() == qt.values.size(), "quantized payload does not match its shape");
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<double>(qt.values[i]) * qt.scale;
  return t;
}

double dynamic_activation_scale(const Tensor& input) {
  const double m = max_abs(input);
  return m > 0.0 ? m / 127.0 : 1.0;
}

Tensor quantized_conv1d_forward(const Tensor& input, const QuantizedConvLayer& layer, bool apply_activation) {
  const auto& ws = layer.weight.shape;
  require(ws.size() == 3 && layer.bias.size() == ws[0] && layer.stride >= 1, "malformed quantized conv layer");
  require(input.rank() == 2 && input.dim(0) == ws[1], "quantized conv expects " + std::to_string(ws[1]) +
                                                         " input channels, got " + shape_string(input.shape));
  require(input.dim(1) >= ws[2], "quantized conv input shorter than its kernel");
  const kernels::ConvShape s{ws[1], ws[0], ws[2], layer.stride, input.dim(1)};
  check_budget(s.patch(), "conv layer");
  const double in_scale = dynamic_activation_scale(input);
  const auto qx = quantize_values(input, in_scale);
  std::vector<std::int32_t> acc(s.out_channels * s.out_time());
  kernels::conv1d_int8(s, qx.data(), layer.weight.values.data(), acc.data());
  return rescale(acc, {s.out_channels, s.out_time()}, in_scale * layer.weight.scale, layer.bias, apply_activation);
}

Tensor quantized_deconv1d_forward(const Tensor& input, const QuantizedDeconvLayer& layer, bool apply_activation) {
  const auto& ws = layer.weight.shape;
  require(ws.size() == 3 && layer.bias.size() == ws[1] && layer.stride >= 1,
          "malformed quantized transposed conv layer");
  require(input.rank() == 2 && input.dim(0) == ws[0] && input.dim(1) >= 1,
          "quantized transposed conv expects " + std::to_string(ws[0]) + " input channels, got " +
              shape_string(input.shape));
  const kernels::DeconvShape s{ws[0], ws[1], ws[2], layer.stride, input.dim(1)};
  check_budget(deconv_terms(layer), "transposed conv layer");
  const double in_scale = dynamic_activation_scale(input);
  const auto qx = quantize_values(input, in_scale);
  std::vector<std::int32_t> acc(s.out_channels * s.out_time());
  kernels::deconv1d_int8(s, qx.data(), layer.weight.values.data(), acc.data());
  return rescale(acc, {s.out_channels, s.out_time()}, in_scale * layer.weight.scale, layer.bias, apply_activation);
}

Tensor quantized_linear_forward(const Tensor& input, const QuantizedLinear& layer) {
  require(layer.weight.shape.size() == 2, "quantized linear weight must be a matrix");
  QuantizedConvLayer pointwise{layer.weight, layer.bias, 1};
  pointwise.weight.shape = {layer.weight.shape[0], layer.weight.shape[1], 1};
  return quantized_conv1d_forward(input, pointwise, false);
}

QuantizedModel quantize_model(const net::Model& model) {
  net::check_model(model);
  QuantizedModel q;
  q.config = model.config;
  for (const auto& l : model.params.encoder) q.encoder.push_back(quantize_layer(l));
  q.lstm = model.params.lstm;
  q.projection = {quantize_tensor(model.params.projection.weight), model.params.projection.bias};
  for (const auto& l : model.params.decoder) q.decoder.push_back(quantize_layer(l));
  check_accumulators(q);
  return q;
}

Tensor quantized_model_forward(const QuantizedModel& model, const Tensor& waveform) {
  const auto& cfg = model.config;
  require(waveform.rank() == 2 && waveform.dim(0) == 1,
          "model input must be [1 x T], got " + shape_string(waveform.shape));
  const std::size_t t = waveform.dim(1);
  if (t < cfg.min_length()) {
    fail(ErrorCode::TooShort, std::to_string(t) + " samples, the model needs at least " +
                                  std::to_string(cfg.min_length()));
  }
  const std::size_t depth = model.encoder.size();
  require(depth == model.decoder.size() && depth >= 1, "encoder and decoder depths differ");

  Tensor x({1, cfg.valid_length(t)});
  std::copy(waveform.data.begin(), waveform.data.end(), x.data.begin());
  std::vector<Tensor> skips;
  skips.reserve(depth);
  for (const auto& layer : model.encoder) {
    skips.push_back(quantized_conv1d_forward(skips.empty() ? x : skips.back(), layer, true));
  }
  Tensor y = quantized_linear_forward(net::lstm_forward(skips.back(), model.lstm), model.projection);
  for (std::size_t j = 0; j < depth; ++j) {
    const Tensor& skip = skips[depth - 1 - j];
    require(y.same_shape(skip), "skip connection shape mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += skip.data[i];
    y = quantized_deconv1d_forward(y, model.decoder[j], j + 1 < depth);
  }
  Tensor out({1, t});
  std::copy(y.data.begin(), y.data.begin() + static_cast<std::ptrdiff_t>(t), out.data.begin());
  return out;
}

net::Model dequantize_model(const QuantizedModel& model) {
  net::Model m;
  m.config = model.config;
  for (const auto& l : model.encoder) m.params.encoder.push_back({dequantize_tensor(l.weight), l.bias, l.stride});
  m.params.lstm = model.lstm;
  m.params.projection = {dequantize_tensor(model.projection.weight), model.projection.bias};
  for (const auto& l : model.decoder) m.params.decoder.push_back({dequantize_tensor(l.weight), l.bias, l.stride});
  return m;
}

std::size_t Footprint::total_bytes() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.bytes;
  return n;
}

std::size_t Footprint::conv_bytes(std::size_t min_params) const {
  // Entries come in weight/bias pairs per layer; group by the layer prefix.
  std::size_t total = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].conv) continue;
    const auto& name = entries[i].name;
    const std::string layer = name.substr(0, name.rfind('.'));
    std::size_t params = 0;
    std::size_t bytes = 0;
    std::size_t j = i;
    for (; j < entries.size() && entries[j].conv && entries[j].name.rfind(layer + ".", 0) == 0; ++j) {
      params += entries[j].elements;
      bytes += entries[j].bytes;
    }
    if (params >= min_params) total += bytes;
    i = j - 1;
  }
  return total;
}

Footprint model_footprint(const net::Model& model) {
  Footprint f;
  model.params.for_each([&](const std::string& name, const Tensor& t) {
    const bool conv = name.rfind("encoder.", 0) == 0 || name.rfind("decoder.", 0) == 0;
    add_entry(f, name, t.size(), false, conv);
  });
  return f;
}

Footprint model_footprint(const QuantizedModel& model) {
  Footprint f;
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    add_entry(f, p + "weight", model.encoder[i].weight.values.size(), true, true);
    add_entry(f, p + "bias", model.encoder[i].bias.size(), false, true);
  }
  for (std::size_t i = 0; i < model.lstm.layers.size(); ++i) {
    const std::string p = "lstm." + std::to_string(i) + ".";
    const auto& l = model.lstm.layers[i];
    add_entry(f, p + "w_ih", l.w_ih.size(), false, false);
    add_entry(f, p + "w_hh", l.w_hh.size(), false, false);
    add_entry(f, p + "b_ih", l.b_ih.size(), false, false);
    add_entry(f, p + "b_hh", l.b_hh.size(), false, false);
  }
  add_entry(f, "projection.weight", model.projection.weight.values.size(), true, false);
  add_entry(f, "projection.bias", model.projection.bias.size(), false, false);
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    const std::string p = "decoder." + std::to_string(i) + ".";
    add_entry(f, p + "weight", model.decoder[i].weight.values.size(), true, true);
    add_entry(f, p + "bias", model.decoder[i].bias.size(), false, true);
  }
  return f;
}

void check_accumulators(const QuantizedModel& model) {
  for (std::size_t i = 0; i < model.encoder.size(); ++i) {
    const auto& w = model.encoder[i].weight.shape;
    check_budget(w[1] * w[2], "encoder." + std::to_string(i));
  }
  check_budget(model.projection.weight.shape[1], "projection");
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    check_budget(deconv_terms(model.decoder[i]), "decoder." + std::to_string(i));
  }
}

double relative_l2(const Tensor& a, const Tensor& ref) {
  require(a.same_shape(ref), "relative_l2 of " + shape_string(a.shape) + " vs " + shape_string(ref.shape));
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - ref.data[i];
    num += d * d;
    den += ref.data[i] * ref.data[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

}  // namespace edgespeech::quant
