#include "treelabel/checkpoint.hpp"

#include <fstream>

namespace treelabel::nn {

using nlohmann::json;

void encoder_config_to_json(const EncoderConfig& cfg, json& j) {
  j["point_levels"] = json::array();
  for (const auto& level : cfg.point_levels) {
    j["point_levels"].push_back({{"centroids", level.centroids},
                                 {"radius", level.radius},
                                 {"max_group", level.max_group},
                                 {"mlp", level.mlp}});
  }
  j["feature_width"] = cfg.feature_width;
  j["gat_layers"] = cfg.gat_layers;
  j["gat_heads"] = cfg.gat_heads;
  j["propagation_k"] = cfg.propagation_k;
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig cfg;
  cfg.point_levels.clear();
  for (const auto& jl : j.at("point_levels")) {
    SetAbstractionLevel level;
    level.centroids = jl.at("centroids").get<std::int64_t>();
    level.radius = jl.at("radius").get<double>();
    level.max_group = jl.at("max_group").get<std::int64_t>();
    level.mlp = jl.at("mlp").get<std::vector<std::int64_t>>();
    cfg.point_levels.push_back(std::move(level));
  }
  cfg.feature_width = j.at("feature_width").get<std::int64_t>();
  cfg.gat_layers = j.at("gat_layers").get<std::int64_t>();
  cfg.gat_heads = j.at("gat_heads").get<std::int64_t>();
  cfg.propagation_k = j.at("propagation_k").get<int>();
  return cfg;
}

void fusion_config_to_json(const FusionConfig& cfg, json& j) {
  j["num_layers"] = cfg.num_layers;
  j["width"] = cfg.width;
  j["ball_radius"] = cfg.ball_radius;
  j["max_ball_points"] = cfg.max_ball_points;
  j["propagation_k"] = cfg.propagation_k;
  j["num_classes"] = cfg.num_classes;
  j["implicit_hidden"] = cfg.implicit_hidden;
  j["stage_mask"] = cfg.stage_mask;
}

FusionConfig fusion_config_from_json(const json& j) {
  FusionConfig cfg;
  cfg.num_layers = j.at("num_layers").get<std::int64_t>();
  cfg.width = j.at("width").get<std::int64_t>();
  cfg.ball_radius = j.at("ball_radius").get<double>();
  cfg.max_ball_points = j.at("max_ball_points").get<std::int64_t>();
  cfg.propagation_k = j.at("propagation_k").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.implicit_hidden = j.at("implicit_hidden").get<std::vector<std::int64_t>>();
  cfg.stage_mask = j.value("stage_mask", std::vector<int>{});
  return cfg;
}

void save_checkpoint(const ParameterStore<float>& store, const EncoderConfig& enc,
                     const FusionConfig& fus, const std::filesystem::path& manifest_path) {
  auto blob_path = manifest_path;
  blob_path.replace_extension(".bin");

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  encoder_config_to_json(enc, manifest["config"]["encoder"]);
  fusion_config_to_json(fus, manifest["config"]["fusion"]);
  manifest["blob"] = blob_path.filename().string();

  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write checkpoint blob " + blob_path.string());
  std::size_t offset = 0;
  manifest["tensors"] = json::array();
  for (const auto& [name, entry] : store.entries()) {
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", entry.value.shape}, {"offset", offset}});
    blob.write(reinterpret_cast<const char*>(entry.value.values.data()),
               static_cast<std::streamsize>(entry.value.values.size() * sizeof(float)));
    offset += entry.value.values.size() * sizeof(float);
  }
  if (!blob) throw std::runtime_error("I/O failure writing " + blob_path.string());

  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write checkpoint manifest " + manifest_path.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("I/O failure writing " + manifest_path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("checkpoint manifest not found: " + manifest_path.string());
  json manifest;
  in >> manifest;
  if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format_version");
  }

  Checkpoint ckpt;
  ckpt.encoder = encoder_config_from_json(manifest.at("config").at("encoder"));
  ckpt.fusion = fusion_config_from_json(manifest.at("config").at("fusion"));

  const auto blob_path =
      manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint blob not found: " + blob_path.string());

  for (const auto& jt : manifest.at("tensors")) {
    const auto name = jt.at("name").get<std::string>();
    const auto shape = jt.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = jt.at("offset").get<std::size_t>();
    auto& value = ckpt.store.create(name, shape);
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(value.values.data()),
              static_cast<std::streamsize>(value.values.size() * sizeof(float)));
    if (!blob) throw std::runtime_error("short read in checkpoint blob " + blob_path.string());
  }
  return ckpt;
}

}  // namespace treelabel::nn
