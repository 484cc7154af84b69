#pragma once

#include <memory>
#include <vector>

#include "treelabel/fusion.hpp"
#include "treelabel/volume.hpp"

namespace treelabel::nn {

/// Multi-stage point features cached after one backbone pass, indexed for
/// arbitrary-coordinate queries. Immutable once built.
struct FeatureCache {
  std::vector<Vec3> coords;               // M sampled point positions
  std::vector<float> features;            // M x width, row-major stage concat
  std::int64_t width = 0;
  std::shared_ptr<const SpatialIndex> index;
  int k = 3;

  const float* row(std::size_t i) const { return &features[i * width]; }
};

/// Concatenate the selected point stages (ascending order) into a cache.
/// Each stage is an M x D value matrix copied off the tape.
FeatureCache build_cache(const std::vector<TensorValue<float>>& point_stages,
                         const std::vector<Vec3>& coords, const std::vector<int>& stage_mask,
                         int propagation_k);

/// IDW-interpolated multi-stage feature of one query coordinate (k nearest
/// cached points, Eq.-style reciprocal-distance weights, exact-hit
/// shortcut).
std::vector<float> interpolate_cached_feature(const FeatureCache& cache, const Vec3& q);

/// Class logits for one query: interpolate, then apply the implicit head.
std::vector<float> implicit_query(const FeatureCache& cache, const Mlp<float>& head,
                                  const ParameterStore<float>& store, const Vec3& q);

/// Batched argmax labels (class ids 1..C) for arbitrary query coordinates.
/// Chunks are processed independently, optionally across threads; output
/// order matches the input order either way.
std::vector<int> label_queries(const FeatureCache& cache, const Mlp<float>& head,
                               const ParameterStore<float>& store, const std::vector<Vec3>& queries,
                               std::size_t chunk = 16384, int threads = 1);

/// Shared preprocessing for both reconstruction paths: binarized volume,
/// normalization transform, foreground list, and the skeleton graph.
struct ReconstructionContext {
  LabelVolume binary;
  CoordTransform transform;
  std::vector<Voxel> foreground;
  SkeletonGraph graph;
};

ReconstructionContext build_reconstruction_context(const LabelVolume& input);

struct ReconstructOptions {
  int sample_points = 6000;
  std::uint64_t seed = 0;
  std::size_t chunk = 16384;
  int threads = 1;
};

/// One backbone pass over a seeded foreground sample; returns the feature
/// cache the implicit head queries against.
FeatureCache run_backbone_cache(const ReconstructionContext& ctx, const PgnModel<float>& model,
                                ParameterStore<float>& store, const ReconstructOptions& opts);

/// Implicit dense reconstruction: one backbone pass, then every foreground
/// voxel is labeled through the implicit head. Background stays 0.
LabelVolume reconstruct_dense(const ReconstructionContext& ctx, const PgnModel<float>& model,
                              ParameterStore<float>& store, const ReconstructOptions& opts);

/// Baseline: split the foreground into ceil(F / sample_points) disjoint
/// groups (the last padded by repetition) and run the full backbone on each,
/// labeling every voxel from its own group's point logits.
LabelVolume repeated_inference_reconstruct(const ReconstructionContext& ctx,
                                           const PgnModel<float>& model,
                                           ParameterStore<float>& store,
                                           const ReconstructOptions& opts);

/// Argmax class index -> class id. Logit column c stands for class c+1;
/// ties resolve to the smaller class id.
int argmax_class(const float* logits, std::int64_t num_classes);

}  // namespace treelabel::nn
