#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rinkkp/train.hpp"

namespace rinkkp {

// Merged run configuration. Config files are JSON objects with flat dotted
// keys ("model.base_channels", "train.lr", "scene.n_matches", ...); unknown
// keys are rejected. sigma and p_drop live under train.* and are mirrored
// into the model config.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SceneSpec scene;

    std::set<std::string> keys_present;  // keys seen in file + overrides
};

RunConfig default_run_config();

// Loads the optional config file, then applies "key=value" overrides in
// order. Throws std::invalid_argument on unknown keys or bad values.
RunConfig load_run_config(const std::optional<std::filesystem::path>& config_file,
                          const std::vector<std::string>& overrides);

// Applies a single flat key. Exposed for the CLI's flag handling.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace rinkkp
