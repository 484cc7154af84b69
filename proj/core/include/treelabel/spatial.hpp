#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "treelabel/volume.hpp"

namespace treelabel {

/// Inverse-distance weighting parameters. epsilon guards the 1/d weights;
/// a neighbor at distance <= epsilon short-circuits to an exact hit.
struct PropagationConfig {
  int k = 3;
  double epsilon = 1e-9;
};

struct Neighbor {
  std::size_t id;
  double distance;
};

/// Exact k-NN / ball queries over a fixed point set, backed by a kd-tree.
/// Results are bit-identical to a brute-force scan under the tie rule
/// (distance, then insertion id). Immutable after construction; concurrent
/// queries are safe.
class SpatialIndex {
 public:
  /// Build over M >= 1 points. Throws on an empty set or non-finite input.
  explicit SpatialIndex(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t id) const { return points_[id]; }

  /// The k nearest points to q, ascending (distance, id). Throws if k
  /// exceeds the point count.
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;

  /// All points within radius r of q, nearest first, truncated to the
  /// max_count nearest. May be empty.
  std::vector<Neighbor> ball_query(const Vec3& q, double r, std::size_t max_count) const;

 private:
  struct Node {
    // Leaves hold [begin, end) into order_; internal nodes split on axis.
    int axis = -1;
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;  // point ids, partitioned by the tree
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

/// Squared Euclidean distance, evaluated in the one canonical operation
/// order shared by the index and the brute-force oracles.
inline double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Weighted feature interpolation from k neighbors with weights proportional
/// to reciprocal distance, normalized to sum to 1. Any neighbor within
/// epsilon of the query wins outright (exact-hit shortcut). features is
/// k rows of dim values each, flattened row-major.
std::vector<double> idw_propagate(std::span<const double> features, std::size_t dim,
                                  std::span<const double> distances,
                                  const PropagationConfig& cfg = {});

/// The normalized weights used by idw_propagate (exact-hit collapses to a
/// one-hot vector). Exposed so network code and oracles share one rule.
std::vector<double> idw_weights(std::span<const double> distances,
                                const PropagationConfig& cfg = {});

}  // namespace treelabel
