#pragma once

// Flat key=value run configuration shared by every CLI subcommand.
//
//   # comment
//   gen.n_clips = 2000
//   train.alpha0 = 0.8
//
// Keys are "<section>.<field>"; unknown keys are rejected. Every field has a
// default, and format_run_config() echoes all of them.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pairnet/data.hpp"
#include "pairnet/model.hpp"
#include "pairnet/training.hpp"

namespace pairnet {

inline constexpr const char* kArtifactVersion = "pairnet 1.0.0";

struct EvalOptions {
  int threads = 1;
};

struct RunConfig {
  GenSpec gen;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;

  /// Validates every section; ConfigError fields carry the full key.
  void validate() const;
};

struct ConfigKey {
  std::string key;
  std::string doc;
};

/// Every accepted key with a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its textual value; throws ConfigError on unknown keys
/// or unparsable values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies `text` on top of `base`.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
std::string format_run_config(const RunConfig& config);

}  // namespace pairnet
