#include "treelabel/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace treelabel {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& context) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::runtime_error("unknown config key '" + key + "' in " + context);
    }
  }
}

void parse_tree(const json& j, TreeSpec& spec) {
  check_keys(j,
             {"depth", "branching", "grid", "num_classes", "trunk_length", "length_taper",
              "length_jitter", "trunk_radius", "radius_taper", "min_radius", "branch_angle_deg",
              "trunk_tilt_deg", "max_retries"},
             "tree");
  spec.depth = j.value("depth", spec.depth);
  spec.branching = j.value("branching", spec.branching);
  if (j.contains("grid")) spec.grid = j.at("grid").get<std::array<int, 3>>();
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.trunk_length = j.value("trunk_length", spec.trunk_length);
  spec.length_taper = j.value("length_taper", spec.length_taper);
  spec.length_jitter = j.value("length_jitter", spec.length_jitter);
  spec.trunk_radius = j.value("trunk_radius", spec.trunk_radius);
  spec.radius_taper = j.value("radius_taper", spec.radius_taper);
  spec.min_radius = j.value("min_radius", spec.min_radius);
  if (j.contains("branch_angle_deg")) {
    spec.branch_angle_deg = j.at("branch_angle_deg").get<std::array<double, 2>>();
  }
  spec.trunk_tilt_deg = j.value("trunk_tilt_deg", spec.trunk_tilt_deg);
  spec.max_retries = j.value("max_retries", spec.max_retries);
}

void parse_encoder(const json& j, nn::EncoderConfig& cfg) {
  check_keys(j, {"point_levels", "feature_width", "gat_layers", "gat_heads", "propagation_k"},
             "encoder");
  if (j.contains("point_levels")) {
    cfg.point_levels.clear();
    for (const auto& jl : j.at("point_levels")) {
      check_keys(jl, {"centroids", "radius", "max_group", "mlp"}, "encoder.point_levels");
      nn::SetAbstractionLevel level;
      level.centroids = jl.at("centroids").get<std::int64_t>();
      level.radius = jl.at("radius").get<double>();
      level.max_group = jl.value("max_group", level.max_group);
      level.mlp = jl.at("mlp").get<std::vector<std::int64_t>>();
      cfg.point_levels.push_back(std::move(level));
    }
  }
  cfg.feature_width = j.value("feature_width", cfg.feature_width);
  cfg.gat_layers = j.value("gat_layers", cfg.gat_layers);
  cfg.gat_heads = j.value("gat_heads", cfg.gat_heads);
  cfg.propagation_k = j.value("propagation_k", cfg.propagation_k);
}

void parse_fusion(const json& j, nn::FusionConfig& cfg) {
  check_keys(j,
             {"num_layers", "width", "ball_radius", "max_ball_points", "propagation_k",
              "num_classes", "implicit_hidden", "stage_mask"},
             "fusion");
  cfg.num_layers = j.value("num_layers", cfg.num_layers);
  cfg.width = j.value("width", cfg.width);
  cfg.ball_radius = j.value("ball_radius", cfg.ball_radius);
  cfg.max_ball_points = j.value("max_ball_points", cfg.max_ball_points);
  cfg.propagation_k = j.value("propagation_k", cfg.propagation_k);
  cfg.num_classes = j.value("num_classes", cfg.num_classes);
  if (j.contains("implicit_hidden")) {
    cfg.implicit_hidden = j.at("implicit_hidden").get<std::vector<std::int64_t>>();
  }
  if (j.contains("stage_mask")) cfg.stage_mask = j.at("stage_mask").get<std::vector<int>>();
}

void parse_train(const json& j, TrainConfig& cfg) {
  check_keys(j,
             {"point_epochs", "point_lr", "graph_epochs", "graph_lr", "joint_epochs", "joint_lr",
              "lr_halving_interval", "sample_points", "implicit_points", "augment",
              "rotation_range_deg", "shift_range", "scale_range"},
             "train");
  cfg.point_epochs = j.value("point_epochs", cfg.point_epochs);
  cfg.point_lr = j.value("point_lr", cfg.point_lr);
  cfg.graph_epochs = j.value("graph_epochs", cfg.graph_epochs);
  cfg.graph_lr = j.value("graph_lr", cfg.graph_lr);
  cfg.joint_epochs = j.value("joint_epochs", cfg.joint_epochs);
  cfg.joint_lr = j.value("joint_lr", cfg.joint_lr);
  cfg.lr_halving_interval = j.value("lr_halving_interval", cfg.lr_halving_interval);
  cfg.sample_points = j.value("sample_points", cfg.sample_points);
  cfg.implicit_points = j.value("implicit_points", cfg.implicit_points);
  cfg.augment = j.value("augment", cfg.augment);
  cfg.rotation_range_deg = j.value("rotation_range_deg", cfg.rotation_range_deg);
  cfg.shift_range = j.value("shift_range", cfg.shift_range);
  if (j.contains("scale_range")) {
    cfg.scale_range = j.at("scale_range").get<std::array<double, 2>>();
  }
}

void validate(const RunConfig& cfg) {
  if (cfg.fusion.num_layers < 1) throw std::runtime_error("fusion.num_layers must be >= 1");
  if (cfg.fusion.width != cfg.encoder.feature_width) {
    throw std::runtime_error("fusion.width must match encoder.feature_width");
  }
  if (cfg.train.sample_points < 1) throw std::runtime_error("train.sample_points must be >= 1");
  if (cfg.train.implicit_points < 0) throw std::runtime_error("train.implicit_points must be >= 0");
  if (cfg.tree.num_classes != cfg.fusion.num_classes) {
    throw std::runtime_error("tree.num_classes must match fusion.num_classes");
  }
  for (int s : cfg.fusion.stage_mask) {
    if (s < 0 || s > cfg.fusion.num_layers) {
      throw std::runtime_error("fusion.stage_mask entries must lie in [0, num_layers]");
    }
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad config " + path.string() + ": " + e.what());
  }
  check_keys(j, {"seed", "threads", "tree", "encoder", "fusion", "train", "eval"}, "config root");

  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("tree")) parse_tree(j.at("tree"), cfg.tree);
  if (j.contains("encoder")) parse_encoder(j.at("encoder"), cfg.encoder);
  if (j.contains("fusion")) parse_fusion(j.at("fusion"), cfg.fusion);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) {
    check_keys(j.at("eval"), {"dice_classes"}, "eval");
    cfg.dice_classes = j.at("eval").value("dice_classes", cfg.dice_classes);
  }
  cfg.train.seed = cfg.seed;
  cfg.tree.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["tree"] = {{"depth", cfg.tree.depth},
               {"branching", cfg.tree.branching},
               {"grid", cfg.tree.grid},
               {"num_classes", cfg.tree.num_classes},
               {"trunk_length", cfg.tree.trunk_length},
               {"length_taper", cfg.tree.length_taper},
               {"length_jitter", cfg.tree.length_jitter},
               {"trunk_radius", cfg.tree.trunk_radius},
               {"radius_taper", cfg.tree.radius_taper},
               {"min_radius", cfg.tree.min_radius},
               {"branch_angle_deg", cfg.tree.branch_angle_deg},
               {"trunk_tilt_deg", cfg.tree.trunk_tilt_deg},
               {"max_retries", cfg.tree.max_retries}};
  nn::encoder_config_to_json(cfg.encoder, j["encoder"]);
  nn::fusion_config_to_json(cfg.fusion, j["fusion"]);
  j["train"] = {{"point_epochs", cfg.train.point_epochs},
                {"point_lr", cfg.train.point_lr},
                {"graph_epochs", cfg.train.graph_epochs},
                {"graph_lr", cfg.train.graph_lr},
                {"joint_epochs", cfg.train.joint_epochs},
                {"joint_lr", cfg.train.joint_lr},
                {"lr_halving_interval", cfg.train.lr_halving_interval},
                {"sample_points", cfg.train.sample_points},
                {"implicit_points", cfg.train.implicit_points},
                {"augment", cfg.train.augment},
                {"rotation_range_deg", cfg.train.rotation_range_deg},
                {"shift_range", cfg.train.shift_range},
                {"scale_range", cfg.train.scale_range}};
  j["eval"] = {{"dice_classes", cfg.dice_classes}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << j.dump(2) << "\n";
}

RunConfig desk_config() {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.tree.depth = 4;
  cfg.tree.grid = {64, 64, 64};
  cfg.tree.num_classes = 8;

  cfg.encoder.point_levels = {{750, 0.1, 32, {32}}, {187, 0.2, 32, {64}}};
  cfg.encoder.feature_width = 64;
  cfg.encoder.gat_layers = 5;
  cfg.encoder.gat_heads = 4;

  cfg.fusion.num_layers = 2;
  cfg.fusion.width = 64;
  cfg.fusion.num_classes = 8;
  cfg.fusion.implicit_hidden = {128, 64};

  cfg.train.point_epochs = 24;
  cfg.train.graph_epochs = 60;
  cfg.train.joint_epochs = 30;
  return cfg;
}

}  // namespace treelabel
