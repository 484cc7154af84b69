#pragma once

#include <filesystem>

#include <json.hpp>

#include "treelabel/fusion.hpp"

namespace treelabel::nn {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  EncoderConfig encoder;
  FusionConfig fusion;
  ParameterStore<float> store;
};

/// Write a JSON manifest (tensor table + architecture config) next to a
/// little-endian float32 blob with extension .bin. Tensors are laid out in
/// name order, so identical stores produce identical bytes.
void save_checkpoint(const ParameterStore<float>& store, const EncoderConfig& enc,
                     const FusionConfig& fus, const std::filesystem::path& manifest_path);

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

// Architecture config <-> JSON (shared by checkpoints and run configs).
void encoder_config_to_json(const EncoderConfig& cfg, nlohmann::json& j);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
void fusion_config_to_json(const FusionConfig& cfg, nlohmann::json& j);
FusionConfig fusion_config_from_json(const nlohmann::json& j);

}  // namespace treelabel::nn
