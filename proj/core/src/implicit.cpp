#include "treelabel/implicit.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

#include "treelabel/rng.hpp"
#include "treelabel/skeleton.hpp"

namespace treelabel::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void parallel_chunks(std::size_t total, std::size_t chunk, int threads,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  chunk = std::max<std::size_t>(1, chunk);
  const std::size_t num_chunks = (total + chunk - 1) / chunk;
  if (threads <= 1 || num_chunks == 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) {
      fn(c * chunk, std::min(total, (c + 1) * chunk));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t c = next.fetch_add(1);
      if (c >= num_chunks) return;
      fn(c * chunk, std::min(total, (c + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(threads, static_cast<int>(num_chunks));
  pool.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

/// Fill one row of the query feature matrix from the cache.
void interpolate_into(const FeatureCache& cache, const Vec3& q, float* out) {
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cache.k),
                                              cache.coords.size());
  const auto nn = cache.index->knn(q, k);
  std::vector<double> dists(k);
  for (std::size_t j = 0; j < k; ++j) dists[j] = nn[j].distance;
  const auto w = idw_weights(dists);
  for (std::int64_t c = 0; c < cache.width; ++c) out[c] = 0.0f;
  for (std::size_t j = 0; j < k; ++j) {
    const float wj = static_cast<float>(w[j]);
    const float* row = cache.row(nn[j].id);
    for (std::int64_t c = 0; c < cache.width; ++c) out[c] += wj * row[c];
  }
}

std::vector<Vec3> normalized_coords(const CoordTransform& t, const std::vector<Voxel>& voxels,
                                    const std::vector<std::size_t>& pick) {
  std::vector<Vec3> out(pick.size());
  for (std::size_t i = 0; i < pick.size(); ++i) out[i] = t.to_normalized(voxels[pick[i]]);
  return out;
}

}  // namespace

int argmax_class(const float* logits, std::int64_t num_classes) {
  std::int64_t best = 0;
  for (std::int64_t c = 1; c < num_classes; ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return static_cast<int>(best) + 1;
}

FeatureCache build_cache(const std::vector<TensorValue<float>>& point_stages,
                         const std::vector<Vec3>& coords, const std::vector<int>& stage_mask,
                         int propagation_k) {
  if (stage_mask.empty()) throw std::runtime_error("build_cache: empty stage mask");
  FeatureCache cache;
  cache.coords = coords;
  cache.k = propagation_k;
  for (int s : stage_mask) {
    if (s < 0 || s >= static_cast<int>(point_stages.size())) {
      throw std::runtime_error("build_cache: stage index out of range");
    }
    cache.width += point_stages[s].shape[1];
  }
  const std::int64_t rows = static_cast<std::int64_t>(coords.size());
  cache.features.assign(static_cast<std::size_t>(rows * cache.width), 0.0f);
  std::int64_t col = 0;
  for (int s : stage_mask) {
    const auto& stage = point_stages[s];
    if (stage.shape[0] != rows) throw std::runtime_error("build_cache: stage row mismatch");
    const std::int64_t d = stage.shape[1];
    for (std::int64_t r = 0; r < rows; ++r) {
      std::copy_n(&stage.values[r * d], d, &cache.features[r * cache.width + col]);
    }
    col += d;
  }
  cache.index = std::make_shared<const SpatialIndex>(cache.coords);
  return cache;
}

std::vector<float> interpolate_cached_feature(const FeatureCache& cache, const Vec3& q) {
  std::vector<float> out(static_cast<std::size_t>(cache.width));
  interpolate_into(cache, q, out.data());
  return out;
}

std::vector<float> implicit_query(const FeatureCache& cache, const Mlp<float>& head,
                                  const ParameterStore<float>& store, const Vec3& q) {
  RowMat x(1, cache.width);
  interpolate_into(cache, q, x.data());
  RowMat logits = mlp_infer(head, store, std::move(x));
  return std::vector<float>(logits.data(), logits.data() + logits.cols());
}

std::vector<int> label_queries(const FeatureCache& cache, const Mlp<float>& head,
                               const ParameterStore<float>& store, const std::vector<Vec3>& queries,
                               std::size_t chunk, int threads) {
  std::vector<int> labels(queries.size(), 0);
  parallel_chunks(queries.size(), chunk, threads, [&](std::size_t begin, std::size_t end) {
    RowMat x(static_cast<Eigen::Index>(end - begin), cache.width);
    for (std::size_t i = begin; i < end; ++i) {
      interpolate_into(cache, queries[i], x.row(static_cast<Eigen::Index>(i - begin)).data());
    }
    RowMat logits = mlp_infer(head, store, std::move(x));
    const std::int64_t c = logits.cols();
    for (std::size_t i = begin; i < end; ++i) {
      labels[i] = argmax_class(logits.row(static_cast<Eigen::Index>(i - begin)).data(), c);
    }
  });
  return labels;
}

ReconstructionContext build_reconstruction_context(const LabelVolume& input) {
  ReconstructionContext ctx;
  ctx.binary = binarize(input);
  if (foreground_count(ctx.binary) == 0) {
    throw std::runtime_error("reconstruction: empty foreground");
  }
  ctx.transform = make_transform(ctx.binary);
  for (const auto& [voxel, label] : foreground_voxels(ctx.binary)) {
    ctx.foreground.push_back(voxel);
  }
  ctx.graph = extract_graph(thin(ctx.binary), ctx.transform);
  return ctx;
}

FeatureCache run_backbone_cache(const ReconstructionContext& ctx, const PgnModel<float>& model,
                                ParameterStore<float>& store, const ReconstructOptions& opts) {
  const std::size_t fg = ctx.foreground.size();
  if (fg == 0) throw std::runtime_error("reconstruction: empty foreground");

  // Seeded sample of min(F, M) voxels, padded by repetition up to M.
  Rng rng = substream(opts.seed, "reconstruct-sample");
  auto perm = rng.permutation(fg);
  std::vector<std::size_t> pick;
  const std::size_t m = static_cast<std::size_t>(opts.sample_points);
  pick.reserve(m);
  for (std::size_t i = 0; i < std::max(m, std::size_t{1}); ++i) pick.push_back(perm[i % fg]);
  if (pick.size() > m) pick.resize(m);

  const auto coords = normalized_coords(ctx.transform, ctx.foreground, pick);
  const PgnInstance instance = PgnInstance::make(coords, {}, ctx.graph);

  Graph<float> g(&store);
  const auto out = model.forward(g, instance);
  std::vector<TensorValue<float>> stages;
  stages.reserve(out.point_stages.size());
  for (auto ref : out.point_stages) stages.push_back(g.value(ref));
  return build_cache(stages, coords, model.stage_mask(), model.fusion_config().propagation_k);
}

LabelVolume reconstruct_dense(const ReconstructionContext& ctx, const PgnModel<float>& model,
                              ParameterStore<float>& store, const ReconstructOptions& opts) {
  const FeatureCache cache = run_backbone_cache(ctx, model, store, opts);

  std::vector<Vec3> queries(ctx.foreground.size());
  for (std::size_t i = 0; i < ctx.foreground.size(); ++i) {
    queries[i] = ctx.transform.to_normalized(ctx.foreground[i]);
  }
  const auto labels = label_queries(cache, model.implicit_head(), store, queries, opts.chunk,
                                    opts.threads);

  LabelVolume out = LabelVolume::zeros(ctx.binary.dims, ctx.binary.spacing,
                                       model.fusion_config().num_classes);
  for (std::size_t i = 0; i < ctx.foreground.size(); ++i) {
    const auto& v = ctx.foreground[i];
    out.at(v[0], v[1], v[2]) = static_cast<std::uint8_t>(labels[i]);
  }
  return out;
}

LabelVolume repeated_inference_reconstruct(const ReconstructionContext& ctx,
                                           const PgnModel<float>& model,
                                           ParameterStore<float>& store,
                                           const ReconstructOptions& opts) {
  const std::size_t fg = ctx.foreground.size();
  if (fg == 0) throw std::runtime_error("reconstruction: empty foreground");
  const std::size_t m = static_cast<std::size_t>(opts.sample_points);

  Rng rng = substream(opts.seed, "repeated-groups");
  const auto perm = rng.permutation(fg);

  LabelVolume out = LabelVolume::zeros(ctx.binary.dims, ctx.binary.spacing,
                                       model.fusion_config().num_classes);
  const std::size_t groups = (fg + m - 1) / m;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t begin = gi * m;
    const std::size_t real = std::min(m, fg - begin);
    std::vector<std::size_t> pick(m);
    for (std::size_t i = 0; i < m; ++i) pick[i] = perm[begin + i % real];

    const auto coords = normalized_coords(ctx.transform, ctx.foreground, pick);
    const PgnInstance instance = PgnInstance::make(coords, {}, ctx.graph);
    Graph<float> g(&store);
    const auto result = model.forward(g, instance);
    const auto& logits = g.value(result.point_logits);
    const std::int64_t c = logits.shape[1];
    for (std::size_t i = 0; i < real; ++i) {
      const auto& v = ctx.foreground[perm[begin + i]];
      out.at(v[0], v[1], v[2]) =
          static_cast<std::uint8_t>(argmax_class(&logits.values[i * c], c));
    }
  }
  return out;
}

}  // namespace treelabel::nn
