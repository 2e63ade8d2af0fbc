#include "edgespeech/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string>

#include "edgespeech/error.hpp"

namespace edgespeech {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> known) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, std::string(section) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) fail(ErrorCode::InvalidConfig, "unknown " + std::string(section) + " field '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

namespace net {

void to_json(json& j, const ModelConfig& c) {
  j = json{{"depth", c.depth},
           {"base_channels", c.base_channels},
           {"kernel_size", c.kernel_size},
           {"stride", c.stride},
           {"lstm_layers", c.lstm_layers},
           {"lstm_hidden", c.lstm_hidden},
           {"activation", "relu"}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, "model",
                 {"depth", "base_channels", "kernel_size", "stride", "lstm_layers", "lstm_hidden", "activation"});
  read(j, "depth", c.depth);
  read(j, "base_channels", c.base_channels);
  read(j, "kernel_size", c.kernel_size);
  read(j, "stride", c.stride);
  read(j, "lstm_layers", c.lstm_layers);
  read(j, "lstm_hidden", c.lstm_hidden);
  std::string act = "relu";
  read(j, "activation", act);
  if (act != "relu") fail(ErrorCode::InvalidConfig, "unsupported activation '" + act + "'");
  c.activation = Activation::ReLU;
}

}  // namespace net

namespace train {

void to_json(json& j, const LossConfig& c) { j = json{{"alpha", c.alpha}, {"beta", c.beta}, {"gamma", c.gamma}}; }

void from_json(const json& j, LossConfig& c) {
  reject_unknown(j, "loss", {"alpha", "beta", "gamma"});
  read(j, "alpha", c.alpha);
  read(j, "beta", c.beta);
  read(j, "gamma", c.gamma);
}

void to_json(json& j, const OptimConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
           {"beta1", c.beta1},                 {"beta2", c.beta2},           {"epsilon", c.epsilon},
           {"seed", c.seed},                   {"segment_seconds", c.segment_seconds}};
}

void from_json(const json& j, OptimConfig& c) {
  reject_unknown(j, "optim",
                 {"learning_rate", "batch_size", "epochs", "beta1", "beta2", "epsilon", "seed", "segment_seconds"});
  read(j, "learning_rate", c.learning_rate);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epsilon", c.epsilon);
  read(j, "seed", c.seed);
  read(j, "segment_seconds", c.segment_seconds);
}

}  // namespace train

RunConfig parse_run_config(const json& j) {
  reject_unknown(j, "config", {"model", "loss", "optim"});
  RunConfig rc;
  if (j.contains("model")) net::from_json(j.at("model"), rc.model);
  if (j.contains("loss")) train::from_json(j.at("loss"), rc.loss);
  if (j.contains("optim")) train::from_json(j.at("optim"), rc.optim);
  rc.model.validate();
  rc.loss.validate();
  rc.optim.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::NotFound, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace edgespeech
