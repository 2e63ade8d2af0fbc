#include <doctest.h>

#include <cmath>

#include "edgespeech/error.hpp"
#include "edgespeech/net.hpp"
#include "helpers.hpp"

using namespace edgespeech;
using namespace edgespeech::net;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config(int depth = 1) {
  ModelConfig c;
  c.depth = depth;
  c.base_channels = 2;
  c.kernel_size = 4;
  c.stride = 2;
  c.lstm_layers = 1;
  c.lstm_hidden = 3;
  return c;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("conv1d_forward hand cases") {
  ConvLayerParams identity{Tensor({1, 1, 1}, {1.0}), Tensor({1}), 1};
  const Tensor x({1, 4}, {0.0, 0.5, 2.0, 3.0});
  CHECK(conv1d_forward(x, identity).data == x.data);

  ConvLayerParams pair{Tensor({1, 1, 2}, {1.0, 1.0}), Tensor({1}), 2};
  const Tensor y = conv1d_forward(Tensor({1, 4}, {1, 2, 3, 4}), pair);
  CHECK(y.shape == std::vector<std::size_t>{1, 2});
  CHECK(y.data == std::vector<double>{3.0, 7.0});

  ConvLayerParams negative{Tensor({1, 1, 2}, {1.0, 1.0}), Tensor({1}, {-10.0}), 1};
  for (double v : conv1d_forward(Tensor({1, 5}, {0.1, 0.2, -0.3, 0.4, 0.5}), negative).data) CHECK(v == 0.0);

  CHECK_THROWS_AS(conv1d_forward(Tensor({2, 4}), pair), Error);
  CHECK_THROWS_AS(conv1d_forward(Tensor({1, 1}), pair), Error);
}

TEST_CASE("deconv1d_forward hand cases") {
  DeconvLayerParams pair{Tensor({1, 1, 2}, {1.0, 1.0}), Tensor({1}), 2};
  CHECK(deconv1d_forward(Tensor({1, 2}, {1, 2}), pair, false).data == std::vector<double>{1, 1, 2, 2});

  DeconvLayerParams biased{random_tensor({2, 3, 4}, 1), Tensor({3}, {0.5, -1.0, 2.0}), 2};
  const Tensor z = deconv1d_forward(Tensor({2, 3}), biased, false);
  CHECK(z.shape == std::vector<std::size_t>{3, 8});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 8; ++t) CHECK(z.at(c, t) == biased.bias.data[c]);
  }
  try {
    deconv1d_forward(Tensor({3, 3}), biased, false);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("conv and transposed conv are adjoint") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t in = 1 + seed % 3, out = 2 + seed % 4, k = 2 + seed % 5, s = 1 + seed % 3;
    const std::size_t t_out = 3 + seed;
    const std::size_t t_in = (t_out - 1) * s + k;
    const Tensor w = random_tensor({out, in, k}, 100 + seed);
    ConvLayerParams conv{w, Tensor({out}), s};
    DeconvLayerParams deconv{Tensor({out, in, k}, w.data), Tensor({in}), s};  // same memory, transposed roles
    const Tensor x = random_tensor({in, t_in}, 200 + seed);
    const Tensor y = random_tensor({out, t_out}, 300 + seed);
    const double lhs = dot(conv1d_preactivation(x, conv), y);
    const double rhs = dot(x, deconv1d_forward(y, deconv, false));
    CHECK(std::abs(lhs - rhs) < 1e-9);
  }
}

TEST_CASE("lstm_forward analytic cases") {
  LstmParams zero;
  zero.layers.push_back({Tensor({8, 3}), Tensor({8, 2}), Tensor({8}), Tensor({8})});
  for (double v : lstm_forward(random_tensor({3, 5}, 7), zero).data) CHECK(v == 0.0);

  LstmParams forget = zero;
  for (std::size_t j = 2; j < 4; ++j) forget.layers[0].b_ih.data[j] = 50.0;  // forget gate rows H..2H
  for (double v : lstm_forward(Tensor({3, 6}), forget).data) CHECK(v == 0.0);

  // One unit, one step: gates from w_ih * x + b_ih + b_hh.
  LstmParams one;
  one.layers.push_back({Tensor({4, 1}, {0.3, -0.2, 0.7, 0.5}), Tensor({4, 1}, {0.1, 0.2, 0.3, 0.4}),
                        Tensor({4}, {0.05, 0.1, -0.05, 0.2}), Tensor({4}, {0.01, 0.02, 0.03, -0.04})});
  const double x = 0.8;
  const double i = sigmoid(0.3 * x + 0.06);
  const double g = std::tanh(0.7 * x - 0.02);
  const double o = sigmoid(0.5 * x + 0.16);
  const double h1 = o * std::tanh(i * g);
  const Tensor h = lstm_forward(Tensor({1, 1}, {x}), one);
  CHECK(std::abs(h.data[0] - h1) < 1e-12);
}

TEST_CASE("init_model") {
  const auto a = init_model(ModelConfig{}, 42);
  const auto b = init_model(ModelConfig{}, 42);
  CHECK(fingerprint(a.params) == fingerprint(b.params));
  bool identical = true;
  auto tb = std::vector<const Tensor*>{};
  b.params.for_each([&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  std::size_t k = 0;
  a.params.for_each([&](const std::string&, const Tensor& t) { identical &= t.data == tb[k++]->data; });
  CHECK(identical);
  CHECK(fingerprint(init_model(ModelConfig{}, 43).params) != fingerprint(a.params));

  // Biases start at zero, weights within +-sqrt(1 / fan_in).
  for (const auto& e : a.params.encoder) {
    const double bound = std::sqrt(1.0 / static_cast<double>(e.in_channels() * e.kernel()));
    for (double v : e.weight.data) CHECK(std::abs(v) <= bound);
    for (double v : e.bias.data) CHECK(v == 0.0);
  }

  ModelConfig unit;
  unit.depth = 1;
  unit.base_channels = 1;
  unit.kernel_size = 1;
  unit.stride = 1;
  double largest = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const double w = init_model(unit, s).params.encoder[0].weight.data[0];
    CHECK(std::abs(w) <= 1.0);
    largest = std::max(largest, std::abs(w));
  }
  CHECK(largest > 0.95);

  ModelConfig bad;
  bad.depth = 0;
  try {
    init_model(bad, 1);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("default model layout") {
  const auto m = init_model(ModelConfig{}, 0);
  CHECK(m.params.encoder.size() == 4);
  CHECK(m.params.encoder[3].weight.shape == std::vector<std::size_t>{128, 64, 8});
  CHECK(m.params.decoder[0].weight.shape == std::vector<std::size_t>{128, 64, 8});
  CHECK(m.params.decoder[3].weight.shape == std::vector<std::size_t>{16, 1, 8});
  CHECK(m.params.lstm.layers.size() == 2);
  CHECK(m.params.lstm.layers[0].w_ih.shape == std::vector<std::size_t>{512, 128});
  CHECK(m.params.projection.weight.shape == std::vector<std::size_t>{128, 128});
}

TEST_CASE("valid length and shape algebra over a grid") {
  for (int depth = 1; depth <= 4; ++depth) {
    for (int k = 1; k <= 8; ++k) {
      for (int s = 1; s <= k; ++s) {
        ModelConfig c;
        c.depth = depth;
        c.kernel_size = k;
        c.stride = s;
        for (std::size_t t : {std::size_t(k), std::size_t(k + 1), std::size_t(37), std::size_t(1000)}) {
          const std::size_t v = c.valid_length(t);
          CHECK(v >= t);
          CHECK(c.valid_length(v) == v);
          std::size_t len = v;
          std::vector<std::size_t> levels{len};
          for (int d = 0; d < depth; ++d) {
            REQUIRE(len >= static_cast<std::size_t>(k));
            REQUIRE((len - k) % s == 0);
            len = (len - k) / s + 1;
            levels.push_back(len);
          }
          for (int d = depth; d > 0; --d) {
            len = (len - 1) * s + k;
            CHECK(len == levels[static_cast<std::size_t>(d - 1)]);
          }
        }
      }
    }
  }
}

TEST_CASE("model_forward contracts") {
  const auto m = init_model(tiny_config(2), 3);
  for (std::size_t t : {4, 5, 9, 16, 33, 100}) {
    const Tensor x = random_tensor({1, t}, t);
    const Tensor y = model_forward(m, x);
    CHECK(y.shape == x.shape);
    const Tensor y2 = model_forward(m, x);
    CHECK(y.data == y2.data);
  }
  const auto before = fingerprint(m.params);
  (void)model_forward(m, random_tensor({1, 50}, 1));
  CHECK(fingerprint(m.params) == before);

  auto zero = m;
  zero.params.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
  for (double v : model_forward(zero, random_tensor({1, 64}, 5)).data) CHECK(v == 0.0);

  try {
    model_forward(m, Tensor({1, 3}));
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("model_backward: zero upstream gradient and stale caches") {
  auto m = init_model(tiny_config(2), 9);
  const Tensor x = random_tensor({1, 30}, 2);
  ForwardCache cache;
  (void)model_forward(m, x, &cache);
  const Gradients g = model_backward(m, cache, Tensor({1, 30}));
  g.params.for_each([](const std::string&, const Tensor& t) {
    for (double v : t.data) CHECK(v == 0.0);
  });
  for (double v : g.input.data) CHECK(v == 0.0);

  try {
    model_backward(m, cache, Tensor({1, 31}));
    FAIL("expected StaleCache");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StaleCache);
  }
  m.params.encoder[0].weight.data[0] += 1e-3;
  try {
    model_backward(m, cache, Tensor({1, 30}));
    FAIL("expected StaleCache");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StaleCache);
  }
}

TEST_CASE("conv bias gradient is the ReLU-masked sum of the upstream gradient") {
  ConvLayerParams layer{Tensor({1, 1, 2}, {1.0, -1.0}), Tensor({1}, {0.5}), 1};
  const Tensor x({1, 4}, {0.0, 2.0, 1.0, 1.0});
  // pre = [0.5 - 2, 2 - 1 + 0.5, 0.5] = [-1.5, 1.5, 0.5]
  const Tensor pre = conv1d_preactivation(x, layer);
  CHECK(pre.data == std::vector<double>{-1.5, 1.5, 0.5});
  Tensor upstream({1, 3}, {10.0, 20.0, 40.0});
  Tensor masked = upstream;
  for (std::size_t t = 0; t < 3; ++t) masked.data[t] = pre.data[t] > 0 ? upstream.data[t] : 0.0;
  const LayerGrads g = conv1d_backward(x, layer, masked);
  CHECK(g.bias.data[0] == 60.0);
  // dW[k] = sum_t masked[t] * x[t + k]
  CHECK(g.weight.data == std::vector<double>{20.0 * 2.0 + 40.0 * 1.0, 20.0 * 1.0 + 40.0 * 1.0});
}

TEST_CASE("model gradient agrees with an independent central difference") {
  // Depth 1, 8 samples: every ReLU sits on one pre-activation per channel.
  ModelConfig c = tiny_config(1);
  c.kernel_size = 8;
  c.stride = 4;
  auto m = init_model(c, 11);
  for (auto& b : m.params.encoder[0].bias.data) b = 0.3;  // keep pre-activations off zero
  const Tensor x = random_tensor({1, 8}, 12);
  const Tensor w = random_tensor({1, 8}, 13);  // loss = <w, model(x)>
  ForwardCache cache;
  (void)model_forward(m, x, &cache);
  for (double v : cache.encoder_pre[0].data) REQUIRE(std::abs(v) > 1e-2);
  const Gradients g = model_backward(m, cache, w);

  const double eps = 1e-5;
  double worst = 0.0;
  std::vector<const Tensor*> grads;
  g.params.for_each([&](const std::string&, const Tensor& t) { grads.push_back(&t); });
  std::size_t idx = 0;
  m.params.for_each([&](const std::string&, Tensor& p) {
    const Tensor& gp = *grads[idx++];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.data[i];
      p.data[i] = keep + eps;
      const double up = dot(model_forward(m, x), w);
      p.data[i] = keep - eps;
      const double down = dot(model_forward(m, x), w);
      p.data[i] = keep;
      const double num = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(num - gp.data[i]) / std::max({std::abs(num), std::abs(gp.data[i]), 1e-6}));
    }
  });
  CHECK(worst < 1e-5);

  Tensor xp = x;
  for (std::size_t i = 0; i < 8; ++i) {
    xp.data[i] = x.data[i] + eps;
    const double up = dot(model_forward(m, xp), w);
    xp.data[i] = x.data[i] - eps;
    const double down = dot(model_forward(m, xp), w);
    xp.data[i] = x.data[i];
    CHECK(std::abs((up - down) / (2 * eps) - g.input.data[i]) < 1e-7);
  }
}
