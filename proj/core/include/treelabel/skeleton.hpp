#pragma once

#include <filesystem>
#include <vector>

#include "treelabel/volume.hpp"

namespace treelabel {

struct SkeletonNode {
  int id = 0;
  Voxel voxel{0, 0, 0};            // representative voxel
  Vec3 coord{0, 0, 0};             // normalized-space position of the representative
  int label = 0;                   // class id, 0 until recover_labels
  std::vector<Voxel> cluster;      // all voxels merged into this node (includes voxel)
};

struct SkeletonEdge {
  int id = 0;
  int u = 0, v = 0;                // endpoint node ids
  int label = 0;
  std::vector<Voxel> path;         // interior chain voxels in traversal order
};

/// Centerline graph of a thinned volume: nodes at endpoints and junctions,
/// edges along maximal degree-2 chains. Undirected; a self-loop appears only
/// for a pure cycle broken at one inserted node.
struct SkeletonGraph {
  std::vector<SkeletonNode> nodes;
  std::vector<SkeletonEdge> edges;
  std::vector<std::vector<int>> adjacency;  // node id -> neighbor node ids (per incident edge)

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }
  void rebuild_adjacency();
};

/// Morphological thinning to a one-voxel-wide skeleton. Labels are collapsed
/// to {0,1}; the result is a 0/1 mask over the same dims. Deletion keeps a
/// voxel's local topology intact (single 26-connected foreground component
/// among its neighbors, single 6-connected background component in the
/// 18-neighborhood touching the center), so the number of 26-connected
/// components is preserved and the skeleton is a subset of the input
/// foreground. Endpoints are protected to retain centerline tips. Candidates
/// are collected per directional sub-cycle and re-checked sequentially in
/// scan order, which makes the result deterministic.
LabelVolume thin(const LabelVolume& vol);

/// True iff deleting the voxel at (x,y,z) preserves local topology. Exposed
/// for tests.
bool is_simple_voxel(const LabelVolume& mask, int x, int y, int z);

/// Number of 26-connected foreground components. Union-find over the mask;
/// used as the thinning oracle and by the generators.
std::size_t count_components_26(const LabelVolume& mask);

/// Build the bifurcation/endpoint graph of a thinned mask. Every skeleton
/// voxel ends up in exactly one node cluster or one edge path. Adjacent
/// junction voxels merge into a single node whose representative is the
/// member nearest the cluster centroid; pure cycles get one node inserted at
/// their smallest voxel (scan order) and keep the rest as a self-loop path.
SkeletonGraph extract_graph(const LabelVolume& skeleton_mask, const CoordTransform& transform);

/// Fill node and edge labels from the dense volume: a node takes the label
/// at its representative voxel, an edge the majority label over its path
/// (ties to the smaller class id; empty paths fall back to the endpoint
/// node labels). Throws if any graph voxel sits on background.
void recover_labels(SkeletonGraph& graph, const LabelVolume& vol);

/// Graph JSON round-trip: {nodes:[{id,voxel,coord,label,cluster}],
/// edges:[{id,u,v,label,path}]}.
void save_graph(const SkeletonGraph& graph, const std::filesystem::path& path);
SkeletonGraph load_graph(const std::filesystem::path& path);

}  // namespace treelabel
