#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mega/gnn.hpp"
#include "mega/meta_train.hpp"

namespace mega {

// One experiment. Text form is flat `key = value` lines with `#` comments.
struct RunConfig {
  std::string dataset = "MUTAG";
  std::filesystem::path data_root = "data";
  TrainMode mode = TrainMode::Mega;
  Hyperparams hp;
  ModelDims dims;  // in_features comes from the dataset
  std::size_t n_runs = 10;
  std::filesystem::path out_dir = "runs";
};

// Defaults, with data_root taken from MEGA_DATA_ROOT when set.
RunConfig default_config();

// Throws ConfigError naming the key for unknown keys or bad values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Applies every line of `text` on top of `base`.
RunConfig parse_config(std::string_view text, RunConfig base = default_config());
RunConfig load_config(const std::filesystem::path& path, RunConfig base = default_config());

// All keys, fixed order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

// Hyperparameters as the run will use them (mega-il pins lambda to 0).
Hyperparams effective_hyperparams(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace mega
