#pragma once

#include <filesystem>
#include <optional>

#include "treelabel/fusion.hpp"
#include "treelabel/synth.hpp"

namespace treelabel {

/// Schedule and sampling parameters for the three training phases. The
/// published schedule (120 / 240 / 100 epochs at 0.002 / 0.02 / 0.01, halved
/// every 45 epochs) is the default; desk-scale runs override epochs through
/// the run config.
struct TrainConfig {
  int point_epochs = 120;
  double point_lr = 0.002;
  int graph_epochs = 240;
  double graph_lr = 0.02;
  int joint_epochs = 100;
  double joint_lr = 0.01;
  int lr_halving_interval = 45;

  int sample_points = 6000;    // M per backbone pass
  int implicit_points = 2000;  // M' fresh points for the implicit head

  bool augment = true;
  double rotation_range_deg = 180.0;   // +- about the vertical axis
  double shift_range = 0.1;            // +- per axis
  std::array<double, 2> scale_range{0.9, 1.1};

  std::uint64_t seed = 0;
};

/// Learning rate after `epoch` 0-based epochs: halved every interval.
double scheduled_lr(double base, int epoch, int halving_interval);

struct Augmentation {
  double angle_rad = 0;
  Vec3 shift{0, 0, 0};
  double scale = 1;
};

/// Draw one rotate/shift/scale transform (fixed draw order, so a seed pins
/// the transform).
Augmentation sample_augmentation(const TrainConfig& cfg, Rng& rng);

Vec3 apply_augmentation(const Augmentation& a, const Vec3& p);

void augment_in_place(const Augmentation& a, std::vector<Vec3>& coords);

/// One dataset tree loaded into memory.
struct TreeSample {
  LabelVolume volume;
  CoordTransform transform;
  std::vector<Voxel> fg_voxels;
  std::vector<int> fg_labels;  // 1..C class ids
  SkeletonGraph graph;         // labeled skeleton graph
};

struct LoadedDataset {
  std::vector<TreeSample> trees;
  std::vector<int> train, val, test;
  int num_classes = 0;
};

LoadedDataset load_dataset(const DatasetManifest& manifest);

/// Foreground sample of exactly `count` indices: a seeded permutation,
/// padded by repetition when the tree has fewer foreground voxels.
std::vector<std::size_t> sample_with_pad(std::size_t population, std::size_t count, Rng& rng);

struct PhaseLogRow {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_point_acc = std::numeric_limits<double>::quiet_NaN();
  double val_node_acc = std::numeric_limits<double>::quiet_NaN();
  double val_edge_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  double best_val_point_acc = 0;
  double best_val_node_acc = 0;
  double best_val_edge_acc = 0;
  int best_epoch = -1;
  std::vector<PhaseLogRow> log;
};

void write_training_log(const std::vector<PhaseLogRow>& rows, const std::filesystem::path& path);

/// Phase 1: pre-train the point and graph encoders on their own
/// segmentation tasks (linear heads, discarded afterwards), then freeze
/// them. The store ends up holding exactly the frozen encoder parameters.
TrainResult train_encoders(const LoadedDataset& dataset, const nn::EncoderConfig& enc_cfg,
                           const nn::FusionConfig& fus_cfg, const TrainConfig& cfg,
                           nn::ParameterStore<float>& store,
                           const std::filesystem::path& log_dir = {});

/// Phase 2: joint training of the fusion layers, prediction heads and the
/// implicit head over frozen encoders. Keeps the parameters of the best
/// validation epoch (by point accuracy) in the store.
TrainResult train_ipgn(const LoadedDataset& dataset, const nn::PgnModel<float>& model,
                       const TrainConfig& cfg, nn::ParameterStore<float>& store,
                       const std::filesystem::path& log_dir = {});

/// Fraction (percent) of the most common foreground label; the floor any
/// learned model must beat.
double majority_class_baseline(const LoadedDataset& dataset, const std::vector<int>& tree_ids);

}  // namespace treelabel
