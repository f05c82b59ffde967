#pragma once

#include <string>

#include <json.hpp>

#include "chain/trainer.hpp"

namespace chain {

// Everything a training run needs: corpus path, output directory, and the
// full TrainConfig. File values come first, command-line overrides win.
struct RunConfig {
  std::string corpus;
  std::string out = "run";
  TrainConfig train;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace chain
