#include "edgespeech/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "edgespeech/error.hpp"
#include "edgespeech/kernels.hpp"

namespace edgespeech::net {

namespace {

using Index = std::ptrdiff_t;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::ShapeMismatch, what);
}

void require_matrix(const Tensor& t, const char* what) {
  require(t.rank() == 2, std::string(what) + " must be [channels x time], got " + shape_string(t.shape));
}

kernels::ConvShape conv_shape(const Tensor& input, const ConvLayerParams& layer) {
  require_matrix(input, "conv input");
  require(layer.weight.rank() == 3 && layer.bias.size() == layer.weight.dim(0) && layer.stride >= 1,
          "malformed conv layer " + shape_string(layer.weight.shape));
  require(input.dim(0) == layer.in_channels(), "conv expects " + std::to_string(layer.in_channels()) +
                                                   " input channels, got " + std::to_string(input.dim(0)));
  require(input.dim(1) >= layer.kernel(), "conv input shorter than its kernel");
  return {layer.in_channels(), layer.out_channels(), layer.kernel(), layer.stride, input.dim(1)};
}

kernels::DeconvShape deconv_shape(const Tensor& input, const DeconvLayerParams& layer) {
  require_matrix(input, "transposed conv input");
  require(layer.weight.rank() == 3 && layer.bias.size() == layer.weight.dim(1) && layer.stride >= 1,
          "malformed transposed conv layer " + shape_string(layer.weight.shape));
  require(input.dim(0) == layer.in_channels(), "transposed conv expects " + std::to_string(layer.in_channels()) +
                                                   " input channels, got " + std::to_string(input.dim(0)));
  require(input.dim(1) >= 1, "transposed conv input is empty");
  return {layer.in_channels(), layer.out_channels(), layer.kernel(), layer.stride, input.dim(1)};
}

ConvLayerParams as_pointwise(const LinearParams& layer) {
  ConvLayerParams conv;
  conv.weight = Tensor({layer.weight.dim(0), layer.weight.dim(1), 1}, layer.weight.data);
  conv.bias = layer.bias;
  conv.stride = 1;
  return conv;
}

void check_lstm_layer(const LstmLayerParams& p, std::size_t input) {
  const std::size_t h = p.w_hh.rank() == 2 ? p.w_hh.dim(1) : 0;
  require(h > 0 && p.w_hh.dim(0) == 4 * h, "lstm w_hh must be [4H x H], got " + shape_string(p.w_hh.shape));
  require(p.w_ih.rank() == 2 && p.w_ih.dim(0) == 4 * h && p.w_ih.dim(1) == input,
          "lstm w_ih is " + shape_string(p.w_ih.shape) + ", expected [" + std::to_string(4 * h) + " x " +
              std::to_string(input) + "]");
  require(p.b_ih.size() == 4 * h && p.b_hh.size() == 4 * h, "lstm biases must have 4H entries");
}

// Runs one layer over a time-major input and fills the cache.
void lstm_layer_forward(const LstmLayerParams& p, LstmLayerCache& c) {
  const std::size_t t_len = c.steps;
  const std::size_t in = p.input();
  const std::size_t h = p.hidden();
  const std::size_t g4 = 4 * h;
  c.gates.assign(t_len * g4, 0.0);
  c.cell.assign(t_len * h, 0.0);
  c.hidden.assign(t_len * h, 0.0);

  // Input contribution for all steps at once.
  std::vector<double> pre(t_len * g4);
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(t_len); ++t) {
    const double* x = c.input.data() + static_cast<std::size_t>(t) * in;
    double* row = pre.data() + static_cast<std::size_t>(t) * g4;
    for (std::size_t r = 0; r < g4; ++r) {
      const double* w = p.w_ih.data.data() + r * in;
      double acc = p.b_ih.data[r] + p.b_hh.data[r];
#pragma omp simd reduction(+ : acc)
      for (std::size_t k = 0; k < in; ++k) acc += w[k] * x[k];
      row[r] = acc;
    }
  }

  std::vector<double> zeros(h, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* h_prev = t ? c.hidden.data() + (t - 1) * h : zeros.data();
    const double* c_prev = t ? c.cell.data() + (t - 1) * h : zeros.data();
    double* a = pre.data() + t * g4;
#pragma omp parallel for schedule(static) if (g4 >= 256)
    for (Index r = 0; r < static_cast<Index>(g4); ++r) {
      const double* w = p.w_hh.data.data() + static_cast<std::size_t>(r) * h;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t k = 0; k < h; ++k) acc += w[k] * h_prev[k];
      a[r] += acc;
    }
    double* gate = c.gates.data() + t * g4;
    double* cell = c.cell.data() + t * h;
    double* hid = c.hidden.data() + t * h;
    for (std::size_t j = 0; j < h; ++j) {
      const double i = sigmoid(a[j]);
      const double f = sigmoid(a[h + j]);
      const double g = std::tanh(a[2 * h + j]);
      const double o = sigmoid(a[3 * h + j]);
      gate[j] = i;
      gate[h + j] = f;
      gate[2 * h + j] = g;
      gate[3 * h + j] = o;
      cell[j] = f * c_prev[j] + i * g;
      hid[j] = o * std::tanh(cell[j]);
    }
  }
}

// BPTT for one layer. grad_hidden is time-major [T x H]; returns dL/dinput
// time-major [T x in].
std::vector<double> lstm_layer_backward(const LstmLayerParams& p, const LstmLayerCache& c,
                                        const std::vector<double>& grad_hidden, LstmLayerParams& grads) {
  const std::size_t t_len = c.steps;
  const std::size_t in = p.input();
  const std::size_t h = p.hidden();
  const std::size_t g4 = 4 * h;
  std::vector<double> da(t_len * g4, 0.0);
  std::vector<double> dh_next(h, 0.0);
  std::vector<double> dc_next(h, 0.0);

  for (std::size_t step = t_len; step-- > 0;) {
    const double* gate = c.gates.data() + step * g4;
    const double* cell = c.cell.data() + step * h;
    const double* gh = grad_hidden.data() + step * h;
    double* d = da.data() + step * g4;
    for (std::size_t j = 0; j < h; ++j) {
      const double i = gate[j];
      const double f = gate[h + j];
      const double g = gate[2 * h + j];
      const double o = gate[3 * h + j];
      const double c_prev = step ? c.cell[(step - 1) * h + j] : 0.0;
      const double tc = std::tanh(cell[j]);
      const double dh = gh[j] + dh_next[j];
      const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
      d[j] = dc * g * i * (1.0 - i);
      d[h + j] = dc * c_prev * f * (1.0 - f);
      d[2 * h + j] = dc * i * (1.0 - g * g);
      d[3 * h + j] = dh * tc * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t r = 0; r < g4; ++r) {
      if (d[r] == 0.0) continue;
      const double* w = p.w_hh.data.data() + r * h;
      const double dr = d[r];
#pragma omp simd
      for (std::size_t k = 0; k < h; ++k) dh_next[k] += dr * w[k];
    }
  }

  grads.w_ih = Tensor(p.w_ih.shape);
  grads.w_hh = Tensor(p.w_hh.shape);
  grads.b_ih = Tensor(p.b_ih.shape);
  grads.b_hh = Tensor(p.b_hh.shape);
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(g4); ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    double* gw_ih = grads.w_ih.data.data() + row * in;
    double* gw_hh = grads.w_hh.data.data() + row * h;
    double db = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const double dr = da[t * g4 + row];
      if (dr == 0.0) continue;
      db += dr;
      const double* x = c.input.data() + t * in;
#pragma omp simd
      for (std::size_t k = 0; k < in; ++k) gw_ih[k] += dr * x[k];
      if (t) {
        const double* hp = c.hidden.data() + (t - 1) * h;
#pragma omp simd
        for (std::size_t k = 0; k < h; ++k) gw_hh[k] += dr * hp[k];
      }
    }
    grads.b_ih.data[row] = db;
    grads.b_hh.data[row] = db;
  }

  std::vector<double> dx(t_len * in, 0.0);
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(t_len); ++t) {
    double* out = dx.data() + static_cast<std::size_t>(t) * in;
    const double* d = da.data() + static_cast<std::size_t>(t) * g4;
    for (std::size_t r = 0; r < g4; ++r) {
      if (d[r] == 0.0) continue;
      const double* w = p.w_ih.data.data() + r * in;
      const double dr = d[r];
#pragma omp simd
      for (std::size_t k = 0; k < in; ++k) out[k] += dr * w[k];
    }
  }
  return dx;
}

std::vector<double> to_time_major(const Tensor& m) { return transpose(m).data; }

Tensor from_time_major(const std::vector<double>& v, std::size_t steps, std::size_t channels) {
  return transpose(Tensor({steps, channels}, v));
}

void lstm_forward_cached(const Tensor& seq, const LstmParams& params, std::vector<LstmLayerCache>& caches) {
  require_matrix(seq, "lstm input");
  require(!params.layers.empty(), "lstm has no layers");
  caches.assign(params.layers.size(), {});
  std::size_t in = seq.dim(0);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    check_lstm_layer(layer, in);
    auto& c = caches[l];
    c.steps = seq.dim(1);
    c.input = l == 0 ? to_time_major(seq) : caches[l - 1].hidden;
    lstm_layer_forward(layer, c);
    in = layer.hidden();
  }
}

// grad_out is [H x T]; returns the [C x T] input gradient.
Tensor lstm_backward_cached(const LstmParams& params, const std::vector<LstmLayerCache>& caches,
                            const Tensor& grad_out, LstmParams& grads) {
  grads.layers.assign(params.layers.size(), {});
  std::vector<double> g = to_time_major(grad_out);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    g = lstm_layer_backward(params.layers[l], caches[l], g, grads.layers[l]);
  }
  return from_time_major(g, caches.front().steps, params.layers.front().input());
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require(dst.same_shape(src), "cannot add " + shape_string(src.shape) + " to " + shape_string(dst.shape));
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

Tensor relu_mask(const Tensor& grad, const Tensor& pre) {
  Tensor out = grad;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(pre.data[i] > 0.0)) out.data[i] = 0.0;
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, what); };
  if (depth < 1) bad("depth must be at least 1, got " + std::to_string(depth));
  if (stride < 1) bad("stride must be at least 1, got " + std::to_string(stride));
  if (kernel_size < 1) bad("kernel_size must be at least 1, got " + std::to_string(kernel_size));
  if (base_channels < 1) bad("base_channels must be at least 1, got " + std::to_string(base_channels));
  if (lstm_layers < 1) bad("lstm_layers must be at least 1, got " + std::to_string(lstm_layers));
  if (lstm_hidden < 1) bad("lstm_hidden must be at least 1, got " + std::to_string(lstm_hidden));
  if (depth > 20) bad("depth " + std::to_string(depth) + " overflows the channel count");
}

std::size_t ModelConfig::channels(int level) const {
  if (level == 0) return 1;
  return static_cast<std::size_t>(base_channels) << (level - 1);
}

std::size_t ModelConfig::valid_length(std::size_t t) const {
  const std::size_t k = static_cast<std::size_t>(kernel_size);
  const std::size_t s = static_cast<std::size_t>(stride);
  for (int i = 0; i < depth; ++i) {
    t = t > k ? (t - k + s - 1) / s + 1 : 1;
  }
  for (int i = 0; i < depth; ++i) t = (t - 1) * s + k;
  return t;
}

void Parameters::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i) + ".";
    fn(p + "weight", encoder[i].weight);
    fn(p + "bias", encoder[i].bias);
  }
  for (std::size_t i = 0; i < lstm.layers.size(); ++i) {
    const std::string p = "lstm." + std::to_string(i) + ".";
    fn(p + "w_ih", lstm.layers[i].w_ih);
    fn(p + "w_hh", lstm.layers[i].w_hh);
    fn(p + "b_ih", lstm.layers[i].b_ih);
    fn(p + "b_hh", lstm.layers[i].b_hh);
  }
  fn("projection.weight", projection.weight);
  fn("projection.bias", projection.bias);
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const std::string p = "decoder." + std::to_string(i) + ".";
    fn(p + "weight", decoder[i].weight);
    fn(p + "bias", decoder[i].bias);
  }
}

void Parameters::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<Parameters*>(this)->for_each([&](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters out = *this;
  out.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  return out;
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  auto& p = m.params;
  const std::size_t k = static_cast<std::size_t>(cfg.kernel_size);
  const std::size_t s = static_cast<std::size_t>(cfg.stride);
  for (int l = 0; l < cfg.depth; ++l) {
    const std::size_t in = cfg.channels(l);
    const std::size_t out = cfg.channels(l + 1);
    p.encoder.push_back({Tensor({out, in, k}), Tensor({out}), s});
  }
  const std::size_t hidden = static_cast<std::size_t>(cfg.lstm_hidden);
  const std::size_t top = cfg.channels(cfg.depth);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const std::size_t in = l == 0 ? top : hidden;
    p.lstm.layers.push_back({Tensor({4 * hidden, in}), Tensor({4 * hidden, hidden}), Tensor({4 * hidden}),
                             Tensor({4 * hidden})});
  }
  p.projection = {Tensor({top, hidden}), Tensor({top})};
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::size_t in = cfg.channels(l + 1);
    const std::size_t out = cfg.channels(l);
    p.decoder.push_back({Tensor({in, out, k}), Tensor({out}), s});
  }

  std::mt19937_64 rng(seed);
  auto fill_uniform = [&rng](Tensor& t, double fan_in) {
    const double a = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& v : t.data) v = dist(rng);
  };
  for (auto& e : p.encoder) fill_uniform(e.weight, static_cast<double>(e.in_channels() * e.kernel()));
  for (auto& l : p.lstm.layers) {
    fill_uniform(l.w_ih, static_cast<double>(hidden));
    fill_uniform(l.w_hh, static_cast<double>(hidden));
  }
  fill_uniform(p.projection.weight, static_cast<double>(hidden));
  for (auto& d : p.decoder) fill_uniform(d.weight, static_cast<double>(d.in_channels() * d.kernel()));
  return m;
}

void check_model(const Model& model) {
  const auto& cfg = model.config;
  cfg.validate();
  const auto& p = model.params;
  require(p.encoder.size() == static_cast<std::size_t>(cfg.depth) &&
              p.decoder.size() == static_cast<std::size_t>(cfg.depth) &&
              p.lstm.layers.size() == static_cast<std::size_t>(cfg.lstm_layers),
          "layer counts do not match the model config");
  const std::size_t k = static_cast<std::size_t>(cfg.kernel_size);
  const std::size_t s = static_cast<std::size_t>(cfg.stride);
  const std::size_t hidden = static_cast<std::size_t>(cfg.lstm_hidden);
  for (int l = 0; l < cfg.depth; ++l) {
    const auto& e = p.encoder[static_cast<std::size_t>(l)];
    require(e.weight.shape == std::vector<std::size_t>{cfg.channels(l + 1), cfg.channels(l), k} &&
                e.bias.shape == std::vector<std::size_t>{cfg.channels(l + 1)} && e.stride == s,
            "encoder." + std::to_string(l) + " does not match the model config");
    const auto& d = p.decoder[static_cast<std::size_t>(cfg.depth - 1 - l)];
    require(d.weight.shape == std::vector<std::size_t>{cfg.channels(l + 1), cfg.channels(l), k} &&
                d.bias.shape == std::vector<std::size_t>{cfg.channels(l)} && d.stride == s,
            "decoder." + std::to_string(cfg.depth - 1 - l) + " does not match the model config");
  }
  std::size_t in = cfg.channels(cfg.depth);
  for (const auto& layer : p.lstm.layers) {
    check_lstm_layer(layer, in);
    require(layer.hidden() == hidden, "lstm hidden size does not match the model config");
    in = hidden;
  }
  require(p.projection.weight.shape == std::vector<std::size_t>{cfg.channels(cfg.depth), hidden} &&
              p.projection.bias.size() == cfg.channels(cfg.depth),
          "projection does not match the model config");
}

std::uint64_t fingerprint(const Parameters& params) {
  std::uint64_t h = 1469598103934665603ULL;
  params.for_each([&](const std::string&, const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
    for (std::size_t i = 0; i < t.data.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

Tensor conv1d_preactivation(const Tensor& input, const ConvLayerParams& layer) {
  const auto s = conv_shape(input, layer);
  Tensor out({s.out_channels, s.out_time()});
  kernels::conv1d(s, input.data.data(), layer.weight.data.data(), layer.bias.data.data(), out.data.data());
  return out;
}

Tensor conv1d_forward(const Tensor& input, const ConvLayerParams& layer) {
  Tensor out = conv1d_preactivation(input, layer);
  relu_inplace(out);
  return out;
}

Tensor deconv1d_forward(const Tensor& input, const DeconvLayerParams& layer, bool apply_activation) {
  const auto s = deconv_shape(input, layer);
  Tensor out({s.out_channels, s.out_time()});
  kernels::deconv1d(s, input.data.data(), layer.weight.data.data(), layer.bias.data.data(), out.data.data());
  if (apply_activation) relu_inplace(out);
  return out;
}

Tensor lstm_forward(const Tensor& seq, const LstmParams& params) {
  std::vector<LstmLayerCache> caches;
  lstm_forward_cached(seq, params, caches);
  return from_time_major(caches.back().hidden, seq.dim(1), params.layers.back().hidden());
}

Tensor linear_forward(const Tensor& seq, const LinearParams& layer) {
  require(layer.weight.rank() == 2, "linear weight must be a matrix");
  return conv1d_preactivation(seq, as_pointwise(layer));
}

LayerGrads conv1d_backward(const Tensor& input, const ConvLayerParams& layer, const Tensor& grad_pre) {
  const auto s = conv_shape(input, layer);
  require(grad_pre.shape == std::vector<std::size_t>{s.out_channels, s.out_time()},
          "conv output gradient has shape " + shape_string(grad_pre.shape));
  LayerGrads g{Tensor(input.shape), Tensor(layer.weight.shape), Tensor(layer.bias.shape)};
  kernels::conv1d_backward(s, input.data.data(), layer.weight.data.data(), grad_pre.data.data(), g.input.data.data(),
                           g.weight.data.data(), g.bias.data.data());
  return g;
}

LayerGrads deconv1d_backward(const Tensor& input, const DeconvLayerParams& layer, const Tensor& grad_pre) {
  const auto s = deconv_shape(input, layer);
  require(grad_pre.shape == std::vector<std::size_t>{s.out_channels, s.out_time()},
          "transposed conv output gradient has shape " + shape_string(grad_pre.shape));
  LayerGrads g{Tensor(input.shape), Tensor(layer.weight.shape), Tensor(layer.bias.shape)};
  kernels::deconv1d_backward(s, input.data.data(), layer.weight.data.data(), grad_pre.data.data(),
                             g.input.data.data(), g.weight.data.data(), g.bias.data.data());
  return g;
}

LstmGrads lstm_backward(const Tensor& seq, const LstmParams& params, const Tensor& grad_out) {
  std::vector<LstmLayerCache> caches;
  lstm_forward_cached(seq, params, caches);
  require(grad_out.shape == std::vector<std::size_t>{params.layers.back().hidden(), seq.dim(1)},
          "lstm output gradient has shape " + shape_string(grad_out.shape));
  LstmGrads g;
  g.input = lstm_backward_cached(params, caches, grad_out, g.params);
  return g;
}

Tensor model_forward(const Model& model, const Tensor& waveform, ForwardCache* cache) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  require(waveform.rank() == 2 && waveform.dim(0) == 1, "model input must be [1 x T], got " +
                                                              shape_string(waveform.shape));
  const std::size_t t = waveform.dim(1);
  if (t < cfg.min_length()) {
    fail(ErrorCode::TooShort, std::to_string(t) + " samples, the model needs at least " +
                                  std::to_string(cfg.min_length()));
  }
  const std::size_t depth = static_cast<std::size_t>(cfg.depth);
  require(p.encoder.size() == depth && p.decoder.size() == depth, "layer counts do not match the model config");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.input_length = t;
  c.padded_input = Tensor({1, cfg.valid_length(t)});
  std::copy(waveform.data.begin(), waveform.data.end(), c.padded_input.data.begin());

  const Tensor* x = &c.padded_input;
  for (std::size_t l = 0; l < depth; ++l) {
    c.encoder_pre.push_back(conv1d_preactivation(*x, p.encoder[l]));
    Tensor out = c.encoder_pre.back();
    relu_inplace(out);
    c.encoder_out.push_back(std::move(out));
    x = &c.encoder_out.back();
  }

  lstm_forward_cached(c.encoder_out.back(), p.lstm, c.lstm);
  c.lstm_out = from_time_major(c.lstm.back().hidden, c.lstm.back().steps, p.lstm.layers.back().hidden());
  Tensor y = linear_forward(c.lstm_out, p.projection);

  for (std::size_t j = 0; j < depth; ++j) {
    add_inplace(y, c.encoder_out[depth - 1 - j]);
    c.decoder_in.push_back(y);
    const auto s = deconv_shape(y, p.decoder[j]);
    Tensor pre({s.out_channels, s.out_time()});
    kernels::deconv1d(s, y.data.data(), p.decoder[j].weight.data.data(), p.decoder[j].bias.data.data(),
                      pre.data.data());
    y = pre;
    if (j + 1 < depth) relu_inplace(y);
    c.decoder_pre.push_back(std::move(pre));
  }

  require(y.shape == std::vector<std::size_t>{1, c.padded_input.dim(1)}, "decoder did not restore the padded length");
  Tensor out({1, t});
  std::copy(y.data.begin(), y.data.begin() + static_cast<Index>(t), out.data.begin());
  // Only fingerprint when the caller wants the cache; inference skips it.
  if (cache) c.params_fingerprint = fingerprint(p);
  return out;
}

Gradients model_backward(const Model& model, const ForwardCache& cache, const Tensor& grad_output) {
  const auto& p = model.params;
  if (cache.encoder_out.empty() || cache.params_fingerprint != fingerprint(p)) {
    fail(ErrorCode::StaleCache, "forward cache does not belong to the current parameters");
  }
  if (grad_output.shape != std::vector<std::size_t>{1, cache.input_length}) {
    fail(ErrorCode::StaleCache, "gradient of shape " + shape_string(grad_output.shape) +
                                    " does not match the cached forward of length " +
                                    std::to_string(cache.input_length));
  }
  const std::size_t depth = p.encoder.size();
  Gradients g;
  g.params = p.zeros_like();

  Tensor grad({1, cache.padded_input.dim(1)});
  std::copy(grad_output.data.begin(), grad_output.data.end(), grad.data.begin());

  std::vector<Tensor> grad_enc(depth);
  for (std::size_t l = 0; l < depth; ++l) grad_enc[l] = Tensor(cache.encoder_out[l].shape);

  for (std::size_t j = depth; j-- > 0;) {
    const Tensor grad_pre = j + 1 < depth ? relu_mask(grad, cache.decoder_pre[j]) : grad;
    LayerGrads lg = deconv1d_backward(cache.decoder_in[j], p.decoder[j], grad_pre);
    g.params.decoder[j].weight = std::move(lg.weight);
    g.params.decoder[j].bias = std::move(lg.bias);
    add_inplace(grad_enc[depth - 1 - j], lg.input);
    grad = std::move(lg.input);
  }

  LayerGrads proj = conv1d_backward(cache.lstm_out, as_pointwise(p.projection), grad);
  g.params.projection.weight.data = std::move(proj.weight.data);
  g.params.projection.bias = std::move(proj.bias);
  add_inplace(grad_enc[depth - 1], lstm_backward_cached(p.lstm, cache.lstm, proj.input, g.params.lstm));

  for (std::size_t l = depth; l-- > 0;) {
    const Tensor grad_pre = relu_mask(grad_enc[l], cache.encoder_pre[l]);
    const Tensor& input = l ? cache.encoder_out[l - 1] : cache.padded_input;
    LayerGrads lg = conv1d_backward(input, p.encoder[l], grad_pre);
    g.params.encoder[l].weight = std::move(lg.weight);
    g.params.encoder[l].bias = std::move(lg.bias);
    if (l) {
      add_inplace(grad_enc[l - 1], lg.input);
    } else {
      g.input = Tensor({1, cache.input_length});
      std::copy(lg.input.data.begin(), lg.input.data.begin() + static_cast<Index>(cache.input_length),
                g.input.data.begin());
    }
  }
  return g;
}

}  // namespace edgespeech::net
