#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treelabel/encoders.hpp"

namespace treelabel::nn {

struct FusionConfig {
  std::int64_t num_layers = 3;            // fusion layers l; stages run 0..l
  std::int64_t width = 128;               // fusion feature width D
  double ball_radius = 0.1;               // point-to-graph ball query radius
  std::int64_t max_ball_points = 24;
  int propagation_k = 3;                  // graph-to-point / implicit k-NN
  int num_classes = 19;
  std::vector<std::int64_t> implicit_hidden{256, 128};  // widths of H before the class layer
  std::vector<int> stage_mask;            // stages fed to H; empty = all of 0..l
};

/// One tree prepared for the network: sampled points and graph structure in
/// normalized (possibly augmented) space. Labels are 0-based class indices
/// and may be empty at inference.
struct PgnInstance {
  std::vector<Vec3> points;
  std::vector<int> point_labels;
  std::vector<Vec3> node_coords;
  std::vector<int> node_labels;
  std::vector<std::pair<int, int>> edge_ends;
  std::vector<int> edge_labels;
  GraphAdjacency adjacency;

  static PgnInstance make(std::vector<Vec3> points, std::vector<int> point_labels,
                          const SkeletonGraph& graph) {
    PgnInstance inst;
    inst.points = std::move(points);
    inst.point_labels = std::move(point_labels);
    inst.node_coords.reserve(graph.nodes.size());
    for (const auto& n : graph.nodes) {
      inst.node_coords.push_back(n.coord);
      if (n.label > 0) inst.node_labels.push_back(n.label - 1);
    }
    inst.edge_ends.reserve(graph.edges.size());
    for (const auto& e : graph.edges) {
      inst.edge_ends.emplace_back(e.u, e.v);
      if (e.label > 0) inst.edge_labels.push_back(e.label - 1);
    }
    if (inst.node_labels.size() != inst.node_coords.size()) inst.node_labels.clear();
    if (inst.edge_labels.size() != inst.edge_ends.size()) inst.edge_labels.clear();
    inst.adjacency = GraphAdjacency::from_graph(graph);
    return inst;
  }
};

/// Constant neighbor structure of one instance: ball-query groups per node
/// and k-NN interpolation weights per point. Coordinates do not change
/// across fusion layers, so this is computed once per forward pass.
struct FusionNeighbors {
  std::vector<std::int64_t> ball_ids;      // point ids gathered per node
  std::vector<std::int64_t> ball_offsets;  // per-node segments into ball_ids
  std::vector<std::int64_t> knn_ids;       // node ids, k per point
  std::vector<double> knn_weights;         // idw weights matching knn_ids
  std::int64_t k = 0;
};

template <typename Scalar>
struct PgnOutput {
  using Ref = typename Graph<Scalar>::Ref;
  Ref point_logits = -1;
  Ref node_logits = -1;
  Ref edge_logits = -1;
  std::vector<Ref> point_stages;  // P^(0..l)
  std::vector<Ref> node_stages;   // G^(0..l)
};

/// The Point-Graph Network: frozen-or-trainable encoders, l Point-Graph
/// Fusion layers, and the point/node/edge prediction heads. The implicit
/// head H lives here too so one checkpoint carries the whole pipeline.
template <typename Scalar>
class PgnModel {
 public:
  using Ref = typename Graph<Scalar>::Ref;

  PgnModel(EncoderConfig enc_cfg, FusionConfig fus_cfg)
      : enc_cfg_(enc_cfg), cfg_(fus_cfg), point_enc_{"point_enc", enc_cfg},
        graph_enc_{"graph_enc", enc_cfg} {}

  const EncoderConfig& encoder_config() const { return enc_cfg_; }
  const FusionConfig& fusion_config() const { return cfg_; }

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    point_enc_.init(store, rng);
    graph_enc_.init(store, rng);
    init_fusion(store, rng);
  }

  /// Initialize only the fusion/head parameters (the encoders arrive
  /// pre-trained in the store).
  void init_fusion(ParameterStore<Scalar>& store, Rng& rng) const {
    for (std::int64_t i = 0; i < cfg_.num_layers; ++i) {
      f1(i).init(store, rng);
      fusion_gat(i).init(store, rng);
      f2(i).init(store, rng);
    }
    point_head().init(store, rng);
    node_head_gat().init(store, rng);
    node_head_out().init(store, rng);
    edge_head().init(store, rng);
    implicit_head().init(store, rng);
  }

  FusionNeighbors compute_neighbors(const PgnInstance& inst) const {
    FusionNeighbors nbr;
    const SpatialIndex point_index(inst.points);
    nbr.ball_offsets.push_back(0);
    for (const auto& coord : inst.node_coords) {
      auto group = point_index.ball_query(coord, cfg_.ball_radius,
                                          static_cast<std::size_t>(cfg_.max_ball_points));
      if (group.empty()) group = point_index.knn(coord, 1);  // empty-ball fallback
      for (const auto& nb : group) nbr.ball_ids.push_back(static_cast<std::int64_t>(nb.id));
      nbr.ball_offsets.push_back(static_cast<std::int64_t>(nbr.ball_ids.size()));
    }

    const SpatialIndex node_index(inst.node_coords);
    nbr.k = std::min<std::int64_t>(cfg_.propagation_k,
                                   static_cast<std::int64_t>(inst.node_coords.size()));
    std::vector<double> dists(nbr.k);
    for (const auto& p : inst.points) {
      const auto nn = node_index.knn(p, static_cast<std::size_t>(nbr.k));
      for (std::int64_t j = 0; j < nbr.k; ++j) dists[j] = nn[j].distance;
      const auto w = idw_weights(dists);
      for (std::int64_t j = 0; j < nbr.k; ++j) {
        nbr.knn_ids.push_back(static_cast<std::int64_t>(nn[j].id));
        nbr.knn_weights.push_back(w[j]);
      }
    }
    return nbr;
  }

  /// Point-to-graph fusion (ball query & grouping): per node, max-pool the
  /// F1-transformed in-ball point features, concatenate with the node's
  /// previous feature, and run one attention convolution over the skeleton.
  Ref point_to_graph_fuse(Graph<Scalar>& g, std::int64_t layer, Ref point_feats, Ref node_feats,
                          const FusionNeighbors& nbr, const GraphAdjacency& adj) const {
    const auto gathered = g.gather_rows(point_feats, nbr.ball_ids);
    const auto pooled = g.segment_max(f1(layer).forward(g, gathered), nbr.ball_offsets);
    return fusion_gat(layer).forward(g, g.concat_cols(pooled, node_feats), adj);
  }

  /// Graph-to-point fusion (feature propagation): per point, interpolate the
  /// k nearest node features with normalized reciprocal-distance weights,
  /// concatenate with the point's previous feature, and project with F2.
  Ref graph_to_point_fuse(Graph<Scalar>& g, std::int64_t layer, Ref point_feats, Ref node_feats,
                          const FusionNeighbors& nbr) const {
    std::vector<Scalar> weights(nbr.knn_weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] = static_cast<Scalar>(nbr.knn_weights[i]);
    }
    const auto propagated = g.idw_gather(node_feats, nbr.knn_ids, std::move(weights), nbr.k);
    return f2(layer).forward(g, g.concat_cols(propagated, point_feats));
  }

  /// Full backbone pass. Counts as one backbone invocation.
  PgnOutput<Scalar> forward(Graph<Scalar>& g, const PgnInstance& inst) const {
    ++backbone_passes_;
    PgnOutput<Scalar> out;

    const auto point_feats0 = point_enc_.forward(g, inst.points);
    TensorValue<Scalar> node_xyz({static_cast<std::int64_t>(inst.node_coords.size()), 3});
    for (std::size_t i = 0; i < inst.node_coords.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        node_xyz.values[i * 3 + a] = static_cast<Scalar>(inst.node_coords[i][a]);
      }
    }
    const auto node_feats0 = graph_enc_.forward(g, g.input(std::move(node_xyz)), inst.adjacency);

    out.point_stages.push_back(point_feats0);
    out.node_stages.push_back(node_feats0);

    const FusionNeighbors nbr = compute_neighbors(inst);
    for (std::int64_t layer = 0; layer < cfg_.num_layers; ++layer) {
      const Ref p_prev = out.point_stages.back();
      const Ref g_prev = out.node_stages.back();
      out.node_stages.push_back(
          point_to_graph_fuse(g, layer, p_prev, g_prev, nbr, inst.adjacency));
      out.point_stages.push_back(graph_to_point_fuse(g, layer, p_prev, g_prev, nbr));
    }

    out.point_logits = point_head().forward(g, out.point_stages.back());
    const auto node_hidden =
        g.relu(node_head_gat().forward(g, out.node_stages.back(), inst.adjacency));
    out.node_logits = node_head_out().forward(g, node_hidden);
    if (!inst.edge_ends.empty()) {
      out.edge_logits = edge_logits(g, out.node_stages.back(), inst.edge_ends);
    }
    return out;
  }

  /// Edge classification: endpoint features interpolated by averaging, then
  /// an MLP. Symmetric in the endpoints.
  Ref edge_logits(Graph<Scalar>& g, Ref node_feats,
                  const std::vector<std::pair<int, int>>& edges) const {
    std::vector<std::int64_t> u_ids, v_ids;
    u_ids.reserve(edges.size());
    v_ids.reserve(edges.size());
    for (const auto& [u, v] : edges) {
      u_ids.push_back(u);
      v_ids.push_back(v);
    }
    const auto mean = g.scale(
        g.add(g.gather_rows(node_feats, std::move(u_ids)), g.gather_rows(node_feats, std::move(v_ids))),
        Scalar(0.5));
    return edge_head().forward(g, mean);
  }

  /// Multi-stage concatenation P^(0) .. P^(l) restricted to stage_mask
  /// (ascending stage order), as consumed by the implicit head.
  Ref stage_concat(Graph<Scalar>& g, const std::vector<Ref>& point_stages,
                   const std::vector<int>& stage_mask) const {
    if (stage_mask.empty()) throw std::runtime_error("stage_concat: empty stage mask");
    Ref out = -1;
    for (int stage : stage_mask) {
      if (stage < 0 || stage >= static_cast<int>(point_stages.size())) {
        throw std::runtime_error("stage_concat: stage index out of range");
      }
      out = out < 0 ? point_stages[stage] : g.concat_cols(out, point_stages[stage]);
    }
    return out;
  }

  std::vector<int> all_stages() const {
    std::vector<int> mask(static_cast<std::size_t>(cfg_.num_layers) + 1);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = static_cast<int>(i);
    return mask;
  }

  // Layer definitions; parameters are addressed purely by name so a store
  // loaded from a checkpoint plugs straight in.
  Mlp<Scalar> f1(std::int64_t i) const {
    return {"fusion.l" + std::to_string(i) + ".f1", {cfg_.width, cfg_.width}, true};
  }
  GatLayer<Scalar> fusion_gat(std::int64_t i) const {
    return {"fusion.l" + std::to_string(i) + ".gat", 2 * cfg_.width, cfg_.width,
            enc_cfg_.gat_heads};
  }
  Mlp<Scalar> f2(std::int64_t i) const {
    return {"fusion.l" + std::to_string(i) + ".f2", {2 * cfg_.width, cfg_.width}, true};
  }
  Mlp<Scalar> point_head() const {
    return {"head.point", {cfg_.width, cfg_.width, cfg_.num_classes}, false};
  }
  GatLayer<Scalar> node_head_gat() const {
    return {"head.node.gat", cfg_.width, cfg_.width, enc_cfg_.gat_heads};
  }
  Mlp<Scalar> node_head_out() const {
    return {"head.node.out", {cfg_.width, cfg_.num_classes}, false};
  }
  Mlp<Scalar> edge_head() const {
    return {"head.edge", {cfg_.width, cfg_.width, cfg_.num_classes}, false};
  }
  Mlp<Scalar> implicit_head() const {
    std::vector<std::int64_t> widths{cfg_.width *
                                     static_cast<std::int64_t>(stage_mask().size())};
    for (auto w : cfg_.implicit_hidden) widths.push_back(w);
    widths.push_back(cfg_.num_classes);
    return {"implicit.h", std::move(widths), false};
  }

  std::vector<int> stage_mask() const {
    return cfg_.stage_mask.empty() ? all_stages() : cfg_.stage_mask;
  }

  const PointEncoder<Scalar>& point_encoder() const { return point_enc_; }
  const GraphEncoder<Scalar>& graph_encoder() const { return graph_enc_; }

  std::int64_t backbone_passes() const { return backbone_passes_; }
  void reset_backbone_counter() const { backbone_passes_ = 0; }

 private:
  EncoderConfig enc_cfg_;
  FusionConfig cfg_;
  PointEncoder<Scalar> point_enc_;
  GraphEncoder<Scalar> graph_enc_;
  mutable std::int64_t backbone_passes_ = 0;
};

}  // namespace treelabel::nn
