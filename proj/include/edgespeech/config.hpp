#pragma once

#include <filesystem>

#include <json.hpp>

#include "edgespeech/net.hpp"
#include "edgespeech/train.hpp"

namespace edgespeech {

namespace net {
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
}  // namespace net

namespace train {
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const OptimConfig& c);
void from_json(const nlohmann::json& j, OptimConfig& c);
}  // namespace train

/// Contents of the --config file: {"model": {...}, "loss": {...},
/// "optim": {...}}, every section and field optional. Unknown keys are
/// rejected with InvalidConfig.
struct RunConfig {
  net::ModelConfig model;
  train::LossConfig loss;
  train::OptimConfig optim;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace edgespeech
