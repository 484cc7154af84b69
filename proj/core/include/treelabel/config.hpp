#pragma once

#include <filesystem>

#include "treelabel/checkpoint.hpp"
#include "treelabel/synth.hpp"
#include "treelabel/train.hpp"

namespace treelabel {

/// Everything one pipeline run needs, merged from one JSON file plus CLI
/// overrides (flags win). Unknown keys anywhere in the file are rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  int threads = 0;  // 0 = all cores; 1 = deterministic reference mode
  TreeSpec tree;
  nn::EncoderConfig encoder;
  nn::FusionConfig fusion;
  TrainConfig train;
  std::vector<int> dice_classes;  // empty = 1..C-1
};

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Desk-scale preset: 64-wide two-layer fusion over halved encoders and an
/// 8-class synthetic tree, small enough to train on a laptop CPU in minutes.
RunConfig desk_config();

}  // namespace treelabel
