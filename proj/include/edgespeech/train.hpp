#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "edgespeech/dataset.hpp"
#include "edgespeech/net.hpp"

namespace edgespeech::train {

/// loss = alpha * MSE + beta * MAE + gamma
struct LossConfig {
  double alpha = 0.5;
  double beta = 0.3;
  double gamma = 0.2;

  void validate() const;
};

struct OptimConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  double segment_seconds = 0.0;  // > 0 cuts each training clip into examples of this length

  void validate() const;
};

double complex_loss(const Tensor& estimate, const Tensor& target, const LossConfig& cfg = {});

/// alpha * 2 (e - t) / N + beta * sign(e - t) / N with sign(0) = 0.
Tensor complex_loss_grad(const Tensor& estimate, const Tensor& target, const LossConfig& cfg = {});

struct AdamState {
  long step = 0;
  net::Parameters m;
  net::Parameters v;
};

AdamState make_adam_state(const net::Parameters& params);

/// One bias-corrected Adam update. Throws ShapeMismatch when grads or state
/// do not mirror params.
void adam_step(net::Parameters& params, const net::Parameters& grads, AdamState& state, const OptimConfig& cfg);

struct Example {
  Tensor noisy;  // [1 x T]
  Tensor clean;  // [1 x T]
};

/// Turns loaded pairs into training examples, cutting each into
/// segment_seconds pieces when segment_seconds > 0 (the tail is dropped
/// unless the whole clip is shorter than one piece).
std::vector<Example> make_examples(const std::vector<dataset::Pair>& pairs, double segment_seconds);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainStats {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
};

/// Loss and summed parameter gradient for examples [first, last) of
/// `order`. Examples are processed in parallel, gradients are summed in
/// batch order.
struct BatchResult {
  std::vector<double> losses;  // one per example, batch order
  net::Parameters grad_sum;
};
BatchResult batch_gradient(const net::Model& model, const std::vector<Example>& data,
                           const std::vector<std::size_t>& order, std::size_t first, std::size_t last,
                           const LossConfig& loss_cfg);

/// Seeded shuffle (seed mixed with the epoch number), batches of
/// batch_size with the short final batch kept, forward/loss/backward/Adam
/// per batch. The reported loss is the mean of the per-example losses seen
/// before each update, summed in dataset order. Throws EmptyDataset.
EpochStats train_epoch(net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg,
                       const OptimConfig& optim, AdamState& state, int epoch);

/// Mean complex_loss of the current model over the data (dataset order).
double evaluate_loss(const net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg);

using EpochCallback = std::function<void(const EpochStats&)>;
TrainStats train(net::Model& model, const std::vector<Example>& data, const LossConfig& loss_cfg,
                 const OptimConfig& optim, const EpochCallback& on_epoch = {});

/// "epoch,mean_loss,seconds" rows.
std::string training_log_csv(const TrainStats& stats);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;            // parameter name and index of the worst element
  std::size_t checked = 0;
  std::size_t nudges = 0;       // bias/target adjustments made to leave kinks
  std::size_t remaining_kinks = 0;
};

/// Relative error used by every check: |a - n| / max(|a|, |n|, floor).
/// The floor keeps round-off on gradients that are numerically zero from
/// reading as a large ratio; 0/0 gives 0.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central differences on every parameter of a (tiny) model against
/// model_backward + complex_loss_grad. Before checking, any ReLU
/// pre-activation within `margin` of zero is pushed away by shifting its
/// channel bias, and any estimate-target difference within `margin` of zero
/// by shifting the target, so that no kink lies inside +-epsilon. The model
/// passed in is modified by those nudges.
GradCheckResult gradient_check(net::Model& model, const Tensor& input, Tensor target, const LossConfig& loss_cfg,
                               double epsilon = 1e-4, double margin = 1e-2);

// Per-layer checks on random tiny layers (seeded). Conv and transposed conv
// use the linear map before activation, LSTM uses a random linear readout of
// its output, the loss check avoids |e - t| kinks.
GradCheckResult check_conv_gradients(std::uint64_t seed, double epsilon = 1e-4);
GradCheckResult check_deconv_gradients(std::uint64_t seed, double epsilon = 1e-4);
GradCheckResult check_lstm_gradients(std::uint64_t seed, double epsilon = 1e-4);
GradCheckResult check_loss_gradients(std::uint64_t seed, double epsilon = 1e-4);

}  // namespace edgespeech::train
