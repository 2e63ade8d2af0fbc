#include "edgespeech/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>

#include "edgespeech/error.hpp"

namespace edgespeech::train {

namespace {

using Index = std::ptrdiff_t;

void check_pair(const Tensor& estimate, const Tensor& target) {
  if (!estimate.same_shape(target)) {
    fail(ErrorCode::ShapeMismatch, "estimate " + shape_string(estimate.shape) + " vs target " +
                                       shape_string(target.shape));
  }
  if (estimate.size() == 0) fail(ErrorCode::ShapeMismatch, "loss of empty tensors");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Collects tensors of a Parameters in for_each order.
std::vector<Tensor*> tensors_of(net::Parameters& p) {
  std::vector<Tensor*> out;
  p.for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> tensors_of(const net::Parameters& p) {
  std::vector<const Tensor*> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> names_of(const net::Parameters& p) {
  std::vector<std::string> out;
  p.for_each([&](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

void add_into(net::Parameters& dst, const net::Parameters& src) {
  auto d = tensors_of(dst);
  auto s = tensors_of(src);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto& a = d[i]->data;
    const auto& b = s[i]->data;
#pragma omp simd
    for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
  }
}

void require_mirror(const net::Parameters& a, const net::Parameters& b, const char* what) {
  auto ta = tensors_of(a);
  auto tb = tensors_of(b);
  bool ok = ta.size() == tb.size();
  for (std::size_t i = 0; ok && i < ta.size(); ++i) ok = ta[i]->shape == tb[i]->shape;
  if (!ok) fail(ErrorCode::ShapeMismatch, std::string(what) + " do not mirror the parameters");
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : t.data) v = dist(rng);
  return t;
}

double weighted_sum(const Tensor& a, const Tensor& w) { return dot(a, w); }

// Central differences for every element of `params` against `analytic`.
void compare_all(GradCheckResult& r, const std::string& prefix, Tensor& param, const Tensor& analytic, double eps,
                 const std::function<double()>& objective) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param.data[i];
    param.data[i] = saved + eps;
    const double up = objective();
    param.data[i] = saved - eps;
    const double down = objective();
    param.data[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = relative_error(analytic.data[i], numeric);
    ++r.checked;
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = prefix + "[" + std::to_string(i) + "]";
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(gamma)) {
    fail(ErrorCode::InvalidConfig, "loss weights need alpha, beta >= 0 and finite gamma");
  }
}

void OptimConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::InvalidConfig, "learning_rate must be a finite non-negative number");
  }
  if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  if (epochs < 0) fail(ErrorCode::InvalidConfig, "epochs must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorCode::InvalidConfig, "adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "adam epsilon must be positive");
  if (!(segment_seconds >= 0.0)) fail(ErrorCode::InvalidConfig, "segment_seconds must be non-negative");
}

double complex_loss(const Tensor& estimate, const Tensor& target, const LossConfig& cfg) {
  check_pair(estimate, target);
  double sq = 0.0;
  double abs = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate.data[i] - target.data[i];
    sq += d * d;
    abs += std::abs(d);
  }
  const double n = static_cast<double>(estimate.size());
  return cfg.alpha * (sq / n) + cfg.beta * (abs / n) + cfg.gamma;
}

Tensor complex_loss_grad(const Tensor& estimate, const Tensor& target, const LossConfig& cfg) {
  check_pair(estimate, target);
  const double n = static_cast<double>(estimate.size());
  Tensor g(estimate.shape);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = estimate.data[i] - target.data[i];
    g.data[i] = cfg.alpha * 2.0 * d / n + cfg.beta * sign(d) / n;
  }
  return g;
}

AdamState make_adam_state(const net::Parameters& params) {
  return {0, params.zeros_like(), params.zeros_like()};
}

void adam_step(net::Parameters& params, const net::Parameters& grads, AdamState& state, const OptimConfig& cfg) {
  require_mirror(params, grads, "gradients");
  require_mirror(params, state.m, "adam first moments");
  require_mirror(params, state.v, "adam second moments");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = tensors_of(params);
  auto g = tensors_of(grads);
  auto m = tensors_of(state.m);
  auto v = tensors_of(state.v);
  for (std::size_t t = 0; t < p.size(); ++t) {
    double* pd = p[t]->data.data();
    const double* gd = g[t]->data.data();
    double* md = m[t]->data.data();
    double* vd = v[t]->data.data();
    for (std::size_t i = 0; i < p[t]->size(); ++i) {
      md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
      vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const double m_hat = md[i] / c1;
      const double v_hat = vd[i] / c2;
      pd[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

std::vector<Example> make_examples(const std::vector<dataset::Pair>& pairs, double segment_seconds) {
  std::vector<Example> out;
  for (const auto& p : pairs) {
    const auto& noisy = p.noisy.samples;
    const auto& clean = p.clean.samples;
    if (noisy.size() != clean.size()) fail(ErrorCode::LengthMismatch, "noisy/clean length differ for " + p.entry);
    std::size_t piece = noisy.size();
    if (segment_seconds > 0.0) {
      piece = std::min(piece, static_cast<std::size_t>(std::llround(segment_seconds * p.clean.sample_rate_hz)));
    }
    if (piece == 0) continue;
    for (std::size_t start = 0; start + piece <= noisy.size(); start += piece) {
      Example e{Tensor({1, piece}), Tensor({1, piece})};
      std::copy(noisy.begin() + static_cast<Index>(start), noisy.begin() + static_cast<Index>(start + piece),
                e.noisy.data.begin());
      std::copy(clean.begin() + static_cast<Index>(start), clean.begin() + static_cast<Index>(start + piece),
                e.clean.data.begin());
      out.push_back(std::move(e));
    }
  }
  return out;
}

BatchResult batch_gradient(const net::Model& model, const std::vector<Example>& data,
                           const std::vector<std::size_t>& order, std::size_t first, std::size_t last,
                           const LossConfig& loss_cfg) {
  const std::size_t n = last - first;
  std::vector<double> losses(n, 0.0);
  std::vector<net::Parameters> grads(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (Index b = 0; b < static_cast<Index>(n); ++b) {
    try {
      const Example& ex = data[order[first + static_cast<std::size_t>(b)]];
      net::ForwardCache cache;
      const Tensor out = net::model_forward(model, ex.noisy, &cache);
      losses[static_cast<std::size_t>(b)] = complex_loss(out, ex.clean, loss_cfg);
      grads[static_cast<std::size_t>(b)] =
          net::model_backward(model, cache, complex_loss_grad(out, ex.clean, loss_cfg)).params;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  BatchResult r;
  r.losses = std::move(losses);
  r.grad_sum = std::move(grads.front());
  for (std::size_t b = 1; b < n; ++b) add_into(r.grad_sum, grads[b]);
  return r;
}

EpochStats train_epoch(net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg,
                       const OptimConfig& optim, AdamState& state, int epoch) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "no training examples");
  loss_cfg.validate();
  optim.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(optim.seed), static_cast<std::uint32_t>(optim.seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with modulo draws so the order does not depend on the
  // standard library's distribution implementation.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  std::vector<double> per_example(data.size(), 0.0);
  const std::size_t batch = static_cast<std::size_t>(optim.batch_size);
  for (std::size_t first = 0; first < order.size(); first += batch) {
    const std::size_t last = std::min(first + batch, order.size());
    BatchResult r = batch_gradient(model, data, order, first, last, loss_cfg);
    for (std::size_t b = 0; b < r.losses.size(); ++b) {
      if (!std::isfinite(r.losses[b])) fail(ErrorCode::NonFinite, "training loss diverged");
      per_example[order[first + b]] = r.losses[b];
    }
    const double inv = 1.0 / static_cast<double>(last - first);
    r.grad_sum.for_each([inv](const std::string&, Tensor& t) {
      for (double& v : t.data) v *= inv;
    });
    adam_step(model.params, r.grad_sum, state, optim);
  }

  EpochStats stats;
  stats.epoch = epoch;
  stats.mean_loss = std::accumulate(per_example.begin(), per_example.end(), 0.0) / static_cast<double>(data.size());
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

double evaluate_loss(const net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg) {
  if (data.empty()) fail(ErrorCode::EmptyDataset, "no examples to evaluate");
  std::vector<double> losses(data.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (Index i = 0; i < static_cast<Index>(data.size()); ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    losses[static_cast<std::size_t>(i)] = complex_loss(net::model_forward(model, ex.noisy), ex.clean, loss_cfg);
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

TrainStats train(net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg,
                 const OptimConfig& optim, const EpochCallback& on_epoch) {
  AdamState state = make_adam_state(model.params);
  TrainStats stats;
  for (int e = 1; e <= optim.epochs; ++e) {
    stats.epochs.push_back(train_epoch(model, data, loss_cfg, optim, state, e));
    if (on_epoch) on_epoch(stats.epochs.back());
  }
  return stats;
}

std::string training_log_csv(const TrainStats& stats) {
  std::ostringstream out;
  out << "epoch,mean_loss,seconds\n";
  char line[128];
  for (const auto& e : stats.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.9f,%.3f\n", e.epoch, e.mean_loss, e.seconds);
    out << line;
  }
  return out.str();
}

double relative_error(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckResult gradient_check(net::Model& model, const Tensor& input, Tensor target, const LossConfig& loss_cfg,
                               double epsilon, double margin) {
  GradCheckResult r;
  auto& p = model.params;
  const std::size_t depth = p.encoder.size();

  for (int round = 0; round < 20; ++round) {
    net::ForwardCache cache;
    const Tensor out = net::model_forward(model, input, &cache);
    std::size_t found = 0;
    auto clear_relu = [&](const Tensor& pre, Tensor& bias) {
      const std::size_t t_len = pre.dim(1);
      for (std::size_t c = 0; c < pre.dim(0); ++c) {
        bool near = false;
        for (std::size_t t = 0; t < t_len; ++t) near |= std::abs(pre.at(c, t)) < margin;
        if (near) {
          bias.data[c] += 2.0 * margin;
          ++found;
        }
      }
    };
    for (std::size_t l = 0; l < depth; ++l) clear_relu(cache.encoder_pre[l], p.encoder[l].bias);
    for (std::size_t j = 0; j + 1 < depth; ++j) clear_relu(cache.decoder_pre[j], p.decoder[j].bias);
    if (found) {
      r.nudges += found;
      continue;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::abs(out.data[i] - target.data[i]) < margin) {
        target.data[i] = out.data[i] - 2.0 * margin;
        ++found;
      }
    }
    r.nudges += found;
    if (!found) break;
  }
  {
    // Count what is left so callers can tell a clean check from a forced one.
    net::ForwardCache cache;
    const Tensor out = net::model_forward(model, input, &cache);
    auto count = [&](const Tensor& pre) {
      for (double v : pre.data) r.remaining_kinks += std::abs(v) < margin;
    };
    for (std::size_t l = 0; l < depth; ++l) count(cache.encoder_pre[l]);
    for (std::size_t j = 0; j + 1 < depth; ++j) count(cache.decoder_pre[j]);
    for (std::size_t i = 0; i < out.size(); ++i) r.remaining_kinks += std::abs(out.data[i] - target.data[i]) < margin;
  }

  net::ForwardCache cache;
  const Tensor out = net::model_forward(model, input, &cache);
  const net::Gradients g = net::model_backward(model, cache, complex_loss_grad(out, target, loss_cfg));

  const auto names = names_of(p);
  auto params = tensors_of(p);
  auto grads = tensors_of(g.params);
  auto objective = [&] { return complex_loss(net::model_forward(model, input), target, loss_cfg); };
  for (std::size_t t = 0; t < params.size(); ++t) compare_all(r, names[t], *params[t], *grads[t], epsilon, objective);
  return r;
}

GradCheckResult check_conv_gradients(std::uint64_t seed, double epsilon) {
  std::mt19937_64 rng(seed);
  net::ConvLayerParams layer{random_tensor({3, 2, 4}, rng), random_tensor({3}, rng), 2};
  Tensor x = random_tensor({2, 11}, rng);
  const Tensor readout = random_tensor({3, 4}, rng);
  auto objective = [&] { return weighted_sum(net::conv1d_preactivation(x, layer), readout); };
  const net::LayerGrads g = net::conv1d_backward(x, layer, readout);
  GradCheckResult r;
  compare_all(r, "conv.weight", layer.weight, g.weight, epsilon, objective);
  compare_all(r, "conv.bias", layer.bias, g.bias, epsilon, objective);
  compare_all(r, "conv.input", x, g.input, epsilon, objective);
  return r;
}

GradCheckResult check_deconv_gradients(std::uint64_t seed, double epsilon) {
  std::mt19937_64 rng(seed);
  net::DeconvLayerParams layer{random_tensor({3, 2, 4}, rng), random_tensor({2}, rng), 2};
  Tensor x = random_tensor({3, 5}, rng);
  const Tensor readout = random_tensor({2, 12}, rng);
  auto objective = [&] { return weighted_sum(net::deconv1d_forward(x, layer, false), readout); };
  const net::LayerGrads g = net::deconv1d_backward(x, layer, readout);
  GradCheckResult r;
  compare_all(r, "deconv.weight", layer.weight, g.weight, epsilon, objective);
  compare_all(r, "deconv.bias", layer.bias, g.bias, epsilon, objective);
  compare_all(r, "deconv.input", x, g.input, epsilon, objective);
  return r;
}

GradCheckResult check_lstm_gradients(std::uint64_t seed, double epsilon) {
  std::mt19937_64 rng(seed);
  const std::size_t in = 3;
  const std::size_t h = 4;
  const std::size_t steps = 6;
  net::LstmParams params;
  params.layers.push_back({random_tensor({4 * h, in}, rng, 0.5), random_tensor({4 * h, h}, rng, 0.5),
                           random_tensor({4 * h}, rng, 0.5), random_tensor({4 * h}, rng, 0.5)});
  params.layers.push_back({random_tensor({4 * h, h}, rng, 0.5), random_tensor({4 * h, h}, rng, 0.5),
                           random_tensor({4 * h}, rng, 0.5), random_tensor({4 * h}, rng, 0.5)});
  Tensor x = random_tensor({in, steps}, rng);
  const Tensor readout = random_tensor({h, steps}, rng);
  auto objective = [&] { return weighted_sum(net::lstm_forward(x, params), readout); };
  const net::LstmGrads g = net::lstm_backward(x, params, readout);
  GradCheckResult r;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string p = "lstm." + std::to_string(l) + ".";
    auto& a = params.layers[l];
    const auto& b = g.params.layers[l];
    compare_all(r, p + "w_ih", a.w_ih, b.w_ih, epsilon, objective);
    compare_all(r, p + "w_hh", a.w_hh, b.w_hh, epsilon, objective);
    compare_all(r, p + "b_ih", a.b_ih, b.b_ih, epsilon, objective);
    compare_all(r, p + "b_hh", a.b_hh, b.b_hh, epsilon, objective);
  }
  compare_all(r, "lstm.input", x, g.input, epsilon, objective);
  return r;
}

GradCheckResult check_loss_gradients(std::uint64_t seed, double epsilon) {
  std::mt19937_64 rng(seed);
  Tensor estimate = random_tensor({1, 32}, rng);
  const Tensor target = random_tensor({1, 32}, rng);
  GradCheckResult r;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    // Keep every difference well clear of the |e - t| kink.
    if (std::abs(estimate.data[i] - target.data[i]) < 10.0 * epsilon) {
      estimate.data[i] = target.data[i] + 0.5;
      ++r.nudges;
    }
  }
  const LossConfig cfg;
  const Tensor g = complex_loss_grad(estimate, target, cfg);
  compare_all(r, "loss.estimate", estimate, g, epsilon, [&] { return complex_loss(estimate, target, cfg); });
  return r;
}

}  // namespace edgespeech::train
