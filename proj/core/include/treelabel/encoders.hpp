#pragma once

#include <memory>
#include <string>
#include <vector>

#include "treelabel/layers.hpp"
#include "treelabel/spatial.hpp"

namespace treelabel::nn {

struct SetAbstractionLevel {
  std::int64_t centroids = 0;
  double radius = 0.1;
  std::int64_t max_group = 32;
  std::vector<std::int64_t> mlp;  // hidden/output widths applied per group member
};

struct EncoderConfig {
  std::vector<SetAbstractionLevel> point_levels{{750, 0.1, 32, {32, 64}},
                                                {187, 0.2, 32, {64, 128}}};
  std::int64_t feature_width = 128;  // per-point / per-node encoder output
  std::int64_t gat_layers = 11;
  std::int64_t gat_heads = 4;
  int propagation_k = 3;  // k-NN used by the upsampling interpolation
};

/// Farthest point sampling over a coordinate set. Starts from the smallest
/// id; distance ties keep the smaller id, so the selection is deterministic.
std::vector<std::int64_t> farthest_point_sample(const std::vector<Vec3>& coords,
                                                std::int64_t count);

/// Per-point feature encoder: stacked set-abstraction levels (farthest-point
/// centroids, ball grouping with relative coordinates, shared MLP, max pool)
/// followed by inverse-distance upsampling back through the levels. Output
/// is one feature_width vector per input point.
template <typename Scalar>
struct PointEncoder {
  std::string name = "point_enc";
  EncoderConfig cfg;

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    for (const auto& m : sa_mlps()) m.init(store, rng);
    for (const auto& m : fp_mlps()) m.init(store, rng);
  }

  typename Graph<Scalar>::Ref forward(Graph<Scalar>& g, const std::vector<Vec3>& coords) const {
    if (coords.empty()) throw std::runtime_error("point_encoder: empty point set");
    const auto sa = sa_mlps();
    const auto fp = fp_mlps();

    // Downward pass: abstract each level to its centroids.
    std::vector<std::vector<Vec3>> level_coords{coords};
    std::vector<typename Graph<Scalar>::Ref> level_feats{-1};  // level 0 has raw xyz only
    for (std::size_t li = 0; li < cfg.point_levels.size(); ++li) {
      const auto& level = cfg.point_levels[li];
      const auto& prev_coords = level_coords.back();
      if (static_cast<std::int64_t>(prev_coords.size()) < level.centroids) {
        throw std::runtime_error("point_encoder: fewer points than centroids at level " +
                                 std::to_string(li));
      }
      const auto centroid_ids = farthest_point_sample(prev_coords, level.centroids);
      std::vector<Vec3> centers(centroid_ids.size());
      for (std::size_t i = 0; i < centroid_ids.size(); ++i) {
        centers[i] = prev_coords[centroid_ids[i]];
      }

      const SpatialIndex index(prev_coords);
      std::vector<std::int64_t> member_ids;
      std::vector<std::int64_t> offsets{0};
      std::vector<Scalar> rel;  // relative xyz per member
      for (const auto& c : centers) {
        auto group = index.ball_query(c, level.radius, level.max_group);
        if (group.empty()) group = index.knn(c, 1);
        for (const auto& nb : group) {
          member_ids.push_back(static_cast<std::int64_t>(nb.id));
          const Vec3& p = prev_coords[nb.id];
          rel.push_back(static_cast<Scalar>(p[0] - c[0]));
          rel.push_back(static_cast<Scalar>(p[1] - c[1]));
          rel.push_back(static_cast<Scalar>(p[2] - c[2]));
        }
        offsets.push_back(static_cast<std::int64_t>(member_ids.size()));
      }

      TensorValue<Scalar> rel_rows({static_cast<std::int64_t>(member_ids.size()), 3});
      rel_rows.values = std::move(rel);
      auto rows = g.input(std::move(rel_rows));
      if (level_feats.back() >= 0) {
        rows = g.concat_cols(rows, g.gather_rows(level_feats.back(), member_ids));
      }
      const auto pooled = g.segment_max(sa[li].forward(g, rows), offsets);
      level_coords.push_back(std::move(centers));
      level_feats.push_back(pooled);
    }

    // Upward pass: interpolate back level by level with IDW weights.
    auto running = level_feats.back();
    for (std::size_t li = cfg.point_levels.size(); li-- > 0;) {
      const auto& fine = level_coords[li];
      const auto& coarse = level_coords[li + 1];
      const SpatialIndex index(coarse);
      const std::int64_t k =
          std::min<std::int64_t>(cfg.propagation_k, static_cast<std::int64_t>(coarse.size()));
      std::vector<std::int64_t> idx;
      std::vector<Scalar> weights;
      idx.reserve(fine.size() * k);
      weights.reserve(fine.size() * k);
      std::vector<double> dists(k);
      for (const auto& q : fine) {
        const auto nn = index.knn(q, static_cast<std::size_t>(k));
        for (std::int64_t j = 0; j < k; ++j) dists[j] = nn[j].distance;
        const auto w = idw_weights(dists);
        for (std::int64_t j = 0; j < k; ++j) {
          idx.push_back(static_cast<std::int64_t>(nn[j].id));
          weights.push_back(static_cast<Scalar>(w[j]));
        }
      }
      auto interpolated = g.idw_gather(running, std::move(idx), std::move(weights), k);
      if (li > 0) {
        interpolated = g.concat_cols(interpolated, level_feats[li]);
      } else {
        TensorValue<Scalar> xyz({static_cast<std::int64_t>(fine.size()), 3});
        for (std::size_t i = 0; i < fine.size(); ++i) {
          for (int a = 0; a < 3; ++a) xyz.values[i * 3 + a] = static_cast<Scalar>(fine[i][a]);
        }
        interpolated = g.concat_cols(interpolated, g.input(std::move(xyz)));
      }
      running = fp[li].forward(g, interpolated);
    }
    return running;
  }

  std::vector<Mlp<Scalar>> sa_mlps() const {
    std::vector<Mlp<Scalar>> mlps;
    std::int64_t prev_width = 0;  // raw points carry no features
    for (std::size_t li = 0; li < cfg.point_levels.size(); ++li) {
      std::vector<std::int64_t> widths{3 + prev_width};
      for (auto w : cfg.point_levels[li].mlp) widths.push_back(w);
      mlps.push_back({name + ".sa" + std::to_string(li), std::move(widths), /*relu_last=*/true});
      prev_width = cfg.point_levels[li].mlp.back();
    }
    return mlps;
  }

  /// One affine+ReLU per upsampling step; the final step lands on
  /// feature_width.
  std::vector<Mlp<Scalar>> fp_mlps() const {
    std::vector<Mlp<Scalar>> mlps(cfg.point_levels.size());
    std::int64_t incoming = cfg.point_levels.back().mlp.back();
    for (std::size_t li = cfg.point_levels.size(); li-- > 0;) {
      const std::int64_t skip = li > 0 ? cfg.point_levels[li - 1].mlp.back() : 3;
      const std::int64_t out =
          li > 0 ? std::max(cfg.point_levels[li - 1].mlp.back(), incoming) : cfg.feature_width;
      mlps[li] = {name + ".fp" + std::to_string(li), {incoming + skip, out}, /*relu_last=*/true};
      incoming = out;
    }
    return mlps;
  }
};

/// Stacked graph attention encoder over node coordinates (3 -> width, then
/// width -> width), ReLU between layers.
template <typename Scalar>
struct GraphEncoder {
  std::string name = "graph_enc";
  EncoderConfig cfg;

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    for (const auto& layer : layers()) layer.init(store, rng);
  }

  typename Graph<Scalar>::Ref forward(Graph<Scalar>& g, typename Graph<Scalar>::Ref coords,
                                      const GraphAdjacency& adj) const {
    auto x = coords;
    const auto stack = layers();
    for (std::size_t i = 0; i < stack.size(); ++i) {
      x = stack[i].forward(g, x, adj);
      if (i + 1 < stack.size()) x = g.relu(x);
    }
    return x;
  }

  std::vector<GatLayer<Scalar>> layers() const {
    std::vector<GatLayer<Scalar>> stack;
    for (std::int64_t i = 0; i < cfg.gat_layers; ++i) {
      stack.push_back({name + ".gat" + std::to_string(i), i == 0 ? 3 : cfg.feature_width,
                       cfg.feature_width, cfg.gat_heads});
    }
    return stack;
  }
};

}  // namespace treelabel::nn
