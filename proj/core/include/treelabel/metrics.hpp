#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "treelabel/skeleton.hpp"
#include "treelabel/volume.hpp"

namespace treelabel {

/// Percentage of correctly classified entries, skipping entries whose true
/// label is in `ignore` (background is excluded from scoring by default at
/// call sites). Throws on length mismatch or if everything is ignored.
double accuracy(std::span<const int> pred, std::span<const int> truth,
                const std::set<int>& ignore = {});

enum class DiceMode { kMicro, kMacro };

/// Multi-class Dice over the listed classes, in percent.
/// micro: 2*sum TP / (2*sum TP + sum FP + sum FN) pooled over the classes.
/// macro: mean of per-class Dice; classes absent from both vectors are
/// skipped. Throws on an empty class list or length mismatch.
double dice(std::span<const int> pred, std::span<const int> truth, const std::set<int>& classes,
            DiceMode mode);

/// Per-class Dice values (percent); absent classes map to no entry.
std::map<int, double> per_class_dice(std::span<const int> pred, std::span<const int> truth,
                                     const std::set<int>& classes);

struct GraphMetrics {
  double node_accuracy = 0;
  double node_dice = 0;
  double edge_accuracy = 0;
  double edge_dice = 0;
};

/// Node and edge label agreement between two graphs over the same topology
/// (same node/edge counts and endpoints). Dice is micro over all classes
/// present in the truth labeling.
GraphMetrics graph_metrics(const SkeletonGraph& pred, const SkeletonGraph& truth);

/// Post-processing baseline: every foreground voxel takes the label of the
/// nearest graph element, where candidates are node voxels (carrying the
/// node label) and edge path voxels (carrying the edge label). Distance ties
/// resolve to the smaller element id (nodes first, then edges).
LabelVolume dilate_graph_prediction(const SkeletonGraph& graph, const LabelVolume& vol);

/// Aggregate report for one prediction/truth volume pair.
struct EvalReport {
  double point_accuracy = 0;
  double micro_dice = 0;           // over dice_classes
  double macro_dice = 0;           // over all foreground classes
  std::map<int, double> class_dice;
  std::size_t evaluated_voxels = 0;
  std::vector<int> dice_classes;   // class subset used for micro_dice
  std::optional<GraphMetrics> graph;

  std::string to_table() const;
};

/// Compare prediction and truth volumes voxel-wise (background excluded).
/// dice_classes defaults to 1..C-1, leaving out the trunk class so the
/// micro Dice is informative next to the accuracy.
EvalReport evaluate_volumes(const LabelVolume& pred, const LabelVolume& truth,
                            std::vector<int> dice_classes = {});

void save_report_json(const EvalReport& report, const std::filesystem::path& path,
                      const std::map<std::string, std::string>& provenance = {});

}  // namespace treelabel
