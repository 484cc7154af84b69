#include "treelabel/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

namespace treelabel {

namespace {

constexpr std::uint32_t kLeafSize = 16;

struct HeapEntry {
  double d2;
  std::size_t id;
  bool operator<(const HeapEntry& o) const {  // max-heap: worst candidate on top
    return d2 != o.d2 ? d2 < o.d2 : id < o.id;
  }
};

}  // namespace

SpatialIndex::SpatialIndex(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::runtime_error("SpatialIndex: empty point set");
  for (const auto& p : points_) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw std::runtime_error("SpatialIndex: non-finite coordinate");
    }
  }
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  root_ = build(0, static_cast<std::uint32_t>(order_.size()));
}

std::uint32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
  const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    const Vec3& p = points_[order_[i]];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = points_[a][axis], cb = points_[b][axis];
                     return ca != cb ? ca < cb : a < b;
                   });
  // Capture the split before recursion re-partitions the halves.
  const double split = points_[order_[mid]][axis];
  const std::uint32_t left = build(begin, mid);
  const std::uint32_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<Neighbor> SpatialIndex::knn(const Vec3& q, std::size_t k) const {
  if (k > points_.size()) {
    throw std::runtime_error("knn: k exceeds point count");
  }
  if (k == 0) return {};

  std::priority_queue<HeapEntry> heap;  // holds the current k best
  auto consider = [&](std::size_t id) {
    const HeapEntry e{dist2(q, points_[id]), id};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  };
  // Depth-first with pruning against the current k-th distance.
  auto visit = [&](auto&& self, std::uint32_t node_id) -> void {
    const Node& n = nodes_[node_id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) consider(order_[i]);
      return;
    }
    const double delta = q[n.axis] - n.split;
    const std::uint32_t near = delta < 0 ? n.left : n.right;
    const std::uint32_t far = delta < 0 ? n.right : n.left;
    self(self, near);
    if (heap.size() < k || delta * delta <= heap.top().d2) self(self, far);
  };
  visit(visit, root_);

  std::vector<Neighbor> out(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    out[i] = {heap.top().id, std::sqrt(heap.top().d2)};
    heap.pop();
  }
  return out;
}

std::vector<Neighbor> SpatialIndex::ball_query(const Vec3& q, double r,
                                               std::size_t max_count) const {
  if (!(r > 0)) throw std::runtime_error("ball_query: radius must be positive");
  const double r2 = r * r;
  std::vector<HeapEntry> hits;
  auto visit = [&](auto&& self, std::uint32_t node_id) -> void {
    const Node& n = nodes_[node_id];
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t id = order_[i];
        const double d2v = dist2(q, points_[id]);
        if (d2v <= r2) hits.push_back({d2v, id});
      }
      return;
    }
    const double delta = q[n.axis] - n.split;
    const std::uint32_t near = delta < 0 ? n.left : n.right;
    const std::uint32_t far = delta < 0 ? n.right : n.left;
    self(self, near);
    if (delta * delta <= r2) self(self, far);
  };
  visit(visit, root_);

  std::sort(hits.begin(), hits.end());
  if (hits.size() > max_count) hits.resize(max_count);
  std::vector<Neighbor> out(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) out[i] = {hits[i].id, std::sqrt(hits[i].d2)};
  return out;
}

std::vector<double> idw_weights(std::span<const double> distances, const PropagationConfig& cfg) {
  if (distances.empty()) throw std::runtime_error("idw_weights: no neighbors");
  std::vector<double> w(distances.size(), 0.0);

  // Exact hit: the nearest neighbor within epsilon takes all the weight.
  std::size_t best = distances.size();
  for (std::size_t j = 0; j < distances.size(); ++j) {
    if (distances[j] <= cfg.epsilon &&
        (best == distances.size() || distances[j] < distances[best])) {
      best = j;
    }
  }
  if (best != distances.size()) {
    w[best] = 1.0;
    return w;
  }

  double total = 0.0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    w[j] = 1.0 / std::max(distances[j], cfg.epsilon);
    total += w[j];
  }
  for (auto& x : w) x /= total;
  return w;
}

std::vector<double> idw_propagate(std::span<const double> features, std::size_t dim,
                                  std::span<const double> distances,
                                  const PropagationConfig& cfg) {
  if (features.size() != distances.size() * dim) {
    throw std::runtime_error("idw_propagate: feature/distance dimension mismatch");
  }
  const auto w = idw_weights(distances, cfg);
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < distances.size(); ++j) {
    for (std::size_t c = 0; c < dim; ++c) out[c] += w[j] * features[j * dim + c];
  }
  return out;
}

}  // namespace treelabel
