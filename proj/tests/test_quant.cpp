#include <doctest.h>

#include <cmath>
#include <limits>

#include "edgespeech/error.hpp"
#include "edgespeech/net.hpp"
#include "edgespeech/quant.hpp"
#include "helpers.hpp"

using namespace edgespeech;
using namespace edgespeech::quant;
using testutil::error_of;
using testutil::random_tensor;

namespace {

net::ConvLayerParams random_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                                 std::uint64_t seed) {
  return {random_tensor({out, in, k}, seed, 0.3), random_tensor({out}, seed + 1, 0.1), stride};
}

net::DeconvLayerParams random_deconv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                                     std::uint64_t seed) {
  return {random_tensor({in, out, k}, seed, 0.3), random_tensor({out}, seed + 1, 0.1), stride};
}

const FootprintEntry& entry(const Footprint& f, const std::string& name) {
  for (const auto& e : f.entries) {
    if (e.name == name) return e;
  }
  FAIL("no footprint entry " << name);
  return f.entries.front();
}

}  // namespace

TEST_CASE("quantize_tensor examples") {
  const auto a = quantize_tensor(Tensor({3}, {-1.0, 0.0, 1.0}));
  CHECK(a.scale == 1.0 / 127.0);
  CHECK(a.values == std::vector<std::int8_t>{-127, 0, 127});

  // 0.5 / (1/127) = 63.5 rounds away from zero
  const auto b = quantize_tensor(Tensor({3}, {-1.0, 0.0, 0.5}));
  CHECK(b.scale == 1.0 / 127.0);
  CHECK(b.values[1] == 0);
  CHECK(b.values[2] == 64);
  CHECK(quantize_tensor(Tensor({3}, {1.0, 0.0, -0.5})).values[2] == -64);

  const auto z = quantize_tensor(Tensor({2, 2}));
  CHECK(z.scale == 1.0);
  CHECK(z.values == std::vector<std::int8_t>(4, 0));
  CHECK(z.shape == std::vector<std::size_t>{2, 2});

  CHECK(error_of([] { quantize_tensor(Tensor({2}, {1.0, std::nan("")})); }) == ErrorCode::NonFinite);
  CHECK(error_of([] {
          quantize_tensor(Tensor({1}, {std::numeric_limits<double>::infinity()}));
        }) == ErrorCode::NonFinite);
}

TEST_CASE("dequantization error is at most half a step") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor t = random_tensor({7, 13}, seed, 0.01 * static_cast<double>(seed));
    const auto q = quantize_tensor(t);
    CHECK(q.scale > 0.0);
    const Tensor back = dequantize_tensor(q);
    CHECK(back.shape == t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(back.data[i] - t.data[i]) <= q.scale / 2);

    // re-quantizing the dequantized tensor reproduces the codes and the scale
    const auto again = quantize_tensor(back);
    CHECK(again.values == q.values);
    CHECK(again.scale == q.scale);
  }
  CHECK(dequantize_tensor(quantize_tensor(Tensor({5}))).data == std::vector<double>(5, 0.0));

  QuantizedTensor neg{{-127}, 0.37, {1}};
  CHECK(dequantize_tensor(neg).data[0] == -127 * 0.37);
}

TEST_CASE("dynamic activation scale") {
  CHECK(dynamic_activation_scale(Tensor({2}, {-2.54, 1.0})) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(dynamic_activation_scale(Tensor({3})) == 1.0);
  CHECK(dynamic_activation_scale(Tensor({1}, {1e-300})) > 0.0);
  CHECK(error_of([] { dynamic_activation_scale(Tensor({1}, {std::nan("")})); }) == ErrorCode::NonFinite);
}

TEST_CASE("quantized conv on zero input is the bias path") {
  const auto layer = random_conv(6, 3, 8, 4, 11);
  const Tensor zero({3, 40});
  const Tensor expect = net::conv1d_forward(zero, layer);
  const Tensor got = quantized_conv1d_forward(zero, {quantize_tensor(layer.weight), layer.bias, 4});
  CHECK(got.shape == expect.shape);
  CHECK(got.data == expect.data);
}

TEST_CASE("identity kernel on the int8 grid is exact") {
  // input scale 2^-7 (max 127/128), every value a multiple of it
  Tensor x({1, 255});
  for (int i = 0; i < 255; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<double>(i - 127) / 128.0;
  QuantizedConvLayer identity{quantize_tensor(Tensor({1, 1, 1}, {1.0})), Tensor({1}), 1};
  CHECK(identity.weight.values[0] == 127);
  const Tensor y = quantized_conv1d_forward(x, identity, false);
  CHECK(y.data == x.data);

  QuantizedDeconvLayer deconv_identity{identity.weight, Tensor({1}), 1};
  CHECK(quantized_deconv1d_forward(x, deconv_identity, false).data == x.data);
}

TEST_CASE("quantized layers track the float layers") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor x = random_tensor({8, 200}, seed * 31);
    const auto conv = random_conv(16, 8, 8, 4, seed);
    const Tensor pre = net::conv1d_preactivation(x, conv);
    const Tensor qpre = quantized_conv1d_forward(x, {quantize_tensor(conv.weight), conv.bias, 4}, false);
    CHECK(relative_l2(qpre, pre) < 0.05);

    const auto deconv = random_deconv(8, 4, 8, 4, seed + 100);
    const Tensor d = net::deconv1d_forward(x, deconv, false);
    const Tensor qd = quantized_deconv1d_forward(x, {quantize_tensor(deconv.weight), deconv.bias, 4}, false);
    CHECK(relative_l2(qd, d) < 0.05);

    const net::LinearParams lin{random_tensor({5, 8}, seed + 7, 0.4), random_tensor({5}, seed + 8, 0.1)};
    const Tensor l = net::linear_forward(x, lin);
    const Tensor ql = quantized_linear_forward(x, {quantize_tensor(lin.weight), lin.bias});
    CHECK(relative_l2(ql, l) < 0.05);
  }
}

TEST_CASE("quantized layers reject mismatched shapes and oversized reductions") {
  const auto conv = random_conv(4, 3, 8, 4, 2);
  const QuantizedConvLayer q{quantize_tensor(conv.weight), conv.bias, 4};
  CHECK(error_of([&] { quantized_conv1d_forward(Tensor({2, 40}), q); }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([&] { quantized_conv1d_forward(Tensor({3, 5}), q); }) == ErrorCode::ShapeMismatch);

  // 133144 * 127^2 fits in int32, one more term does not
  const QuantizedConvLayer fits{{std::vector<std::int8_t>(133144, 1), 1.0, {1, 133144, 1}}, Tensor({1}), 1};
  const QuantizedConvLayer spills{{std::vector<std::int8_t>(133145, 1), 1.0, {1, 133145, 1}}, Tensor({1}), 1};
  CHECK_FALSE(error_of([&] { quantized_conv1d_forward(Tensor({133144, 1}, 1.0), fits); }));
  CHECK(error_of([&] { quantized_conv1d_forward(Tensor({133145, 1}, 1.0), spills); }) ==
        ErrorCode::AccumulatorOverflow);
  // a transposed conv with stride s sums in * ceil(k / s) products per output
  const QuantizedDeconvLayer wide{{std::vector<std::int8_t>(66573 * 4, 1), 1.0, {66573, 1, 4}}, Tensor({1}), 2};
  CHECK(error_of([&] { quantized_deconv1d_forward(Tensor({66573, 2}, 1.0), wide, false); }) ==
        ErrorCode::AccumulatorOverflow);
}

TEST_CASE("quantize_model keeps structure and leaves the source alone") {
  const auto model = net::init_model({}, 5);
  const auto before = net::fingerprint(model.params);
  const auto q = quantize_model(model);
  CHECK(net::fingerprint(model.params) == before);
  CHECK(q.config == model.config);
  REQUIRE(q.encoder.size() == model.params.encoder.size());
  REQUIRE(q.decoder.size() == model.params.decoder.size());
  for (std::size_t i = 0; i < q.encoder.size(); ++i) {
    CHECK(q.encoder[i].weight.shape == model.params.encoder[i].weight.shape);
    CHECK(q.encoder[i].bias.data == model.params.encoder[i].bias.data);
    CHECK(q.encoder[i].stride == model.params.encoder[i].stride);
  }
  for (std::size_t i = 0; i < q.decoder.size(); ++i) {
    CHECK(q.decoder[i].weight.shape == model.params.decoder[i].weight.shape);
  }
  CHECK(q.projection.weight.shape == model.params.projection.weight.shape);
  REQUIRE(q.lstm.layers.size() == model.params.lstm.layers.size());
  for (std::size_t l = 0; l < q.lstm.layers.size(); ++l) {
    CHECK(q.lstm.layers[l].w_ih.data == model.params.lstm.layers[l].w_ih.data);
    CHECK(q.lstm.layers[l].w_hh.data == model.params.lstm.layers[l].w_hh.data);
  }
  CHECK_NOTHROW(check_accumulators(q));

  const auto deq = dequantize_model(q);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Tensor x = random_tensor({1, 4000}, seed, 0.5);
    const Tensor ref = net::model_forward(model, x);
    CHECK(relative_l2(quantized_model_forward(q, x), ref) < 0.05);
    CHECK(relative_l2(net::model_forward(deq, x), ref) < 0.05);
  }
}

TEST_CASE("footprint accounting") {
  // one 125 x 1 x 8 kernel: 1000 weights
  net::ModelConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 125;
  cfg.lstm_layers = 1;
  cfg.lstm_hidden = 4;
  const auto model = net::init_model(cfg, 1);
  const auto f32 = model_footprint(model);
  const auto i8 = model_footprint(quantize_model(model));
  CHECK(entry(f32, "encoder.0.weight").elements == 1000);
  CHECK(entry(f32, "encoder.0.weight").bytes == 4000);
  CHECK(entry(i8, "encoder.0.weight").bytes == 1004);
  CHECK(entry(i8, "encoder.0.bias").bytes == 500);
  CHECK_FALSE(entry(i8, "lstm.0.w_ih").int8);
  CHECK(entry(i8, "lstm.0.w_ih").bytes == entry(f32, "lstm.0.w_ih").bytes);

  std::size_t sum = 0;
  for (const auto& e : f32.entries) sum += e.bytes;
  CHECK(f32.total_bytes() == sum);
  CHECK(f32.total_bytes() == 4 * model.params.count());

  const auto full = net::init_model({}, 2);
  const auto a = model_footprint(full);
  const auto b = model_footprint(quantize_model(full));
  CHECK(static_cast<double>(a.conv_bytes()) / static_cast<double>(b.conv_bytes()) > 3.9);
  CHECK(static_cast<double>(b.conv_bytes()) / static_cast<double>(a.conv_bytes()) <= 0.26);
  CHECK(b.total_bytes() < a.total_bytes());
}

TEST_CASE("relative_l2") {
  CHECK(relative_l2(Tensor({2}), Tensor({2})) == 0.0);
  CHECK(relative_l2(Tensor({2}, {3.0, 4.0}), Tensor({2}, {3.0, 4.0})) == 0.0);
  CHECK(relative_l2(Tensor({2}, {0.0, 0.0}), Tensor({2}, {3.0, 4.0})) == 1.0);
  CHECK(relative_l2(Tensor({2}, {3.3, 4.4}), Tensor({2}, {3.0, 4.0})) == doctest::Approx(0.1));
}
