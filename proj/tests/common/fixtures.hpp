#pragma once
// Small corpora and models shared by several test files.
#include <filesystem>
#include <string>

#include "pairnet/data.hpp"
#include "pairnet/model.hpp"
#include "pairnet/training.hpp"

namespace fixture {

inline pairnet::GenSpec tiny_gen(std::size_t clips = 12, std::uint64_t seed = 3) {
  pairnet::GenSpec spec;
  spec.n_clips = clips;
  spec.frames = 8;
  spec.height = 8;
  spec.width = 8;
  spec.mel_bins = 8;
  spec.audio_rate_ratio = 4;
  spec.seed = seed;
  return spec;
}

inline pairnet::ModelConfig tiny_model(const pairnet::GenSpec& gen) {
  pairnet::ModelConfig cfg;
  auto& e = cfg.encoder;
  e.feature_dim = 8;
  e.heads = 2;
  e.video_conv_channels = {4};
  e.video_blocks = 2;
  e.audio_blocks = 3;
  e.audio_conv_channels = 8;
  e.height = static_cast<int>(gen.height);
  e.width = static_cast<int>(gen.width);
  e.mel_bins = static_cast<int>(gen.mel_bins);
  return cfg;
}

inline pairnet::TrainConfig tiny_train() {
  pairnet::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.frame_budget = 24;
  cfg.lr0 = 5e-3;
  cfg.val_fraction = 0.25;
  cfg.freeze = {true, 2};
  return cfg;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pairnet_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
