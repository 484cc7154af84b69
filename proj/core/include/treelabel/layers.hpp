#pragma once

#include <string>
#include <vector>

#include "treelabel/autodiff.hpp"
#include "treelabel/skeleton.hpp"

namespace treelabel::nn {

/// Edge list in CSR form grouped by destination node, self-loops included,
/// deterministic (dst, src) order. Shared by every attention layer that runs
/// over one graph.
struct GraphAdjacency {
  std::int64_t num_nodes = 0;
  std::vector<std::int64_t> src;      // per directed edge
  std::vector<std::int64_t> dst;
  std::vector<std::int64_t> offsets;  // per-dst segment bounds, size num_nodes+1

  static GraphAdjacency from_edges(std::int64_t num_nodes,
                                   const std::vector<std::pair<int, int>>& undirected,
                                   bool add_self_loops = true) {
    std::vector<std::vector<std::int64_t>> in(num_nodes);
    if (add_self_loops) {
      for (std::int64_t n = 0; n < num_nodes; ++n) in[n].push_back(n);
    }
    for (const auto& [u, v] : undirected) {
      in[v].push_back(u);
      if (u != v) in[u].push_back(v);
    }
    GraphAdjacency adj;
    adj.num_nodes = num_nodes;
    adj.offsets.push_back(0);
    for (std::int64_t n = 0; n < num_nodes; ++n) {
      std::sort(in[n].begin(), in[n].end());
      in[n].erase(std::unique(in[n].begin(), in[n].end()), in[n].end());
      for (std::int64_t s : in[n]) {
        adj.src.push_back(s);
        adj.dst.push_back(n);
      }
      adj.offsets.push_back(static_cast<std::int64_t>(adj.src.size()));
    }
    return adj;
  }

  static GraphAdjacency from_graph(const SkeletonGraph& graph, bool add_self_loops = true) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(graph.edges.size());
    for (const auto& e : graph.edges) edges.emplace_back(e.u, e.v);
    return from_edges(static_cast<std::int64_t>(graph.nodes.size()), edges, add_self_loops);
  }
};

/// Affine + ReLU stack. widths = [in, hidden..., out]; the final layer is
/// linear unless relu_last is set.
template <typename Scalar>
struct Mlp {
  std::string name;
  std::vector<std::int64_t> widths;
  bool relu_last = false;

  std::int64_t in_width() const { return widths.front(); }
  std::int64_t out_width() const { return widths.back(); }

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      auto& w = store.create(layer_name(i, "w"), {widths[i], widths[i + 1]});
      init_glorot(w, rng);
      store.create(layer_name(i, "b"), {widths[i + 1]});
    }
  }

  typename Graph<Scalar>::Ref forward(Graph<Scalar>& g, typename Graph<Scalar>::Ref x) const {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      x = g.add_bias(g.matmul(x, g.param(layer_name(i, "w"))), g.param(layer_name(i, "b")));
      if (i + 2 < widths.size() || relu_last) x = g.relu(x);
    }
    return x;
  }

  std::string layer_name(std::size_t i, const char* kind) const {
    return name + ".l" + std::to_string(i) + "." + kind;
  }
};

/// Tape-free MLP application for bulk inference: same parameters, plain
/// Eigen GEMMs over a row-major batch.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mlp_infer(
    const Mlp<Scalar>& mlp, const ParameterStore<Scalar>& store,
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (std::size_t i = 0; i + 1 < mlp.widths.size(); ++i) {
    const auto& w = store.entry(mlp.layer_name(i, "w")).value;
    const auto& b = store.entry(mlp.layer_name(i, "b")).value;
    Eigen::Map<const Mat> wm(w.values.data(), w.shape[0], w.shape[1]);
    Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> bm(b.values.data(),
                                                                  static_cast<Eigen::Index>(b.size()));
    Mat next = x * wm;
    next.rowwise() += bm;
    if (i + 2 < mlp.widths.size() || mlp.relu_last) {
      next = next.cwiseMax(Scalar(0));
    }
    x = std::move(next);
  }
  return x;
}

/// One multi-head graph attention convolution. Scores use a LeakyReLU with
/// the configured slope; per-destination softmax over incident edges; heads
/// are concatenated. Requires a self-loop on isolated nodes (the softmax
/// over an empty segment throws).
template <typename Scalar>
struct GatLayer {
  std::string name;
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t heads = 4;
  Scalar leaky_slope = Scalar(0.2);

  void init(ParameterStore<Scalar>& store, Rng& rng) const {
    auto& w = store.create(name + ".w", {in, out});
    init_glorot(w, rng);
    auto& a_src = store.create(name + ".a_src", {out});
    auto& a_dst = store.create(name + ".a_dst", {out});
    init_uniform(a_src, rng, 0.1);
    init_uniform(a_dst, rng, 0.1);
  }

  typename Graph<Scalar>::Ref forward(Graph<Scalar>& g, typename Graph<Scalar>::Ref x,
                                      const GraphAdjacency& adj) const {
    const auto h = g.matmul(x, g.param(name + ".w"));
    const auto s_src = g.head_dot(h, g.param(name + ".a_src"), heads);
    const auto s_dst = g.head_dot(h, g.param(name + ".a_dst"), heads);
    const auto e = g.leaky_relu(g.add(g.gather_rows(s_src, adj.src), g.gather_rows(s_dst, adj.dst)),
                                leaky_slope);
    const auto alpha = g.segment_softmax(e, adj.offsets);
    return g.segment_attend(alpha, h, adj.src, adj.offsets, heads);
  }
};

/// Convenience form: run an MLP on a plain tensor without keeping the tape.
template <typename Scalar>
TensorValue<Scalar> mlp_forward(ParameterStore<Scalar>& store, const Mlp<Scalar>& mlp,
                                const TensorValue<Scalar>& x) {
  Graph<Scalar> g(&store);
  return g.value(mlp.forward(g, g.input(x)));
}

/// Feature-wise max over a whole set (B x D -> 1 x D).
template <typename Scalar>
TensorValue<Scalar> max_pool_set(const TensorValue<Scalar>& feats) {
  Graph<Scalar> g;
  const auto x = g.input(feats);
  return g.value(g.segment_max(x, {0, feats.shape[0]}));
}

}  // namespace treelabel::nn
