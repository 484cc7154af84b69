#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "treelabel/skeleton.hpp"
#include "treelabel/volume.hpp"

namespace treelabel {

/// Parameters of the procedural labeled-tree generator. A tree is a trunk
/// plus `depth` generations of bifurcating tubular branches rasterized into
/// a voxel grid. Class num_classes is reserved for the trunk (the large,
/// easily recognized structure); classes 1..num_classes-1 are assigned to
/// subtrees by recursive partition, so each one labels a coherent branch
/// set.
struct TreeSpec {
  std::uint64_t seed = 0;
  int depth = 4;       // bifurcation generations below the trunk
  int branching = 2;
  std::array<int, 3> grid{64, 64, 64};
  int num_classes = 8;

  double trunk_length = 15.0;              // voxels
  double length_taper = 0.80;
  double length_jitter = 0.15;             // +- fraction on each branch length
  double trunk_radius = 3.0;               // voxels
  double radius_taper = 0.80;
  double min_radius = 1.0;                 // keeps thin tips 26-connected
  std::array<double, 2> branch_angle_deg{25.0, 50.0};  // tilt from parent direction
  double trunk_tilt_deg = 8.0;
  int max_retries = 32;
};

/// One straight centerline piece of the generated tree.
struct TreeSegment {
  Vec3 a{0, 0, 0}, b{0, 0, 0};
  double radius = 1.0;
  int label = 0;
};

struct GeneratedTree {
  LabelVolume volume;
  SkeletonGraph centerline;           // ground-truth graph: bifurcations and tips
  std::vector<TreeSegment> segments;  // continuous geometry behind the volume
};

/// Deterministically generate one labeled tree. Every foreground voxel takes
/// the class of its nearest centerline segment (ties to the smaller segment
/// id). Geometry that escapes the grid is regenerated from a fresh
/// substream, up to spec.max_retries.
GeneratedTree generate_tree(const TreeSpec& spec);

/// Label of the centerline segment nearest to a continuous position, or 0 if
/// `segments` is empty. Shared by the generator and the free-space oracle.
int nearest_segment_label(const std::vector<TreeSegment>& segments, const Vec3& p);

struct DatasetEntry {
  int id = 0;
  std::string volume;      // paths relative to the manifest directory
  std::string graph;       // skeletonized + label-recovered graph
  std::string centerline;  // generator ground-truth graph
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<DatasetEntry> trees;
  std::vector<int> train, val, test;
  std::filesystem::path root;  // directory of the manifest file, set on load
};

/// Generate n trees plus their skeleton graphs under out_dir and write
/// manifest.json with a deterministic 70/10/20 split (floor rules; train is
/// never left empty when n >= 1).
DatasetManifest generate_dataset(int n, std::uint64_t base_seed, const TreeSpec& spec,
                                 const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

}  // namespace treelabel
