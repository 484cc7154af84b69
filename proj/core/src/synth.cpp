#include "treelabel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "treelabel/rng.hpp"

namespace treelabel {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

/// Orthonormal basis (u, v) perpendicular to w.
void make_basis(const Vec3& w, Vec3& u, Vec3& v) {
  const Vec3 ref = std::abs(w[2]) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  u = normalized({w[1] * ref[2] - w[2] * ref[1], w[2] * ref[0] - w[0] * ref[2],
                  w[0] * ref[1] - w[1] * ref[0]});
  v = {w[1] * u[2] - w[2] * u[1], w[2] * u[0] - w[0] * u[2], w[0] * u[1] - w[1] * u[0]};
}

Vec3 tilted(const Vec3& dir, double polar, double azimuth) {
  Vec3 u, v;
  make_basis(dir, u, v);
  const double s = std::sin(polar), c = std::cos(polar);
  return normalized(add(scaled(dir, c),
                        add(scaled(u, s * std::cos(azimuth)), scaled(v, s * std::sin(azimuth)))));
}

double point_segment_dist2(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
  const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
  double t = len2 > 0 ? (ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 q = add(a, scaled(ab, t));
  const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
  return dx * dx + dy * dy + dz * dz;
}

struct Builder {
  const TreeSpec& spec;
  Rng& rng;
  std::vector<TreeSegment> segments;
  // Centerline graph bookkeeping: node per branch point / tip.
  std::vector<Vec3> node_pos;
  std::vector<std::pair<int, int>> edge_ends;  // node ids per segment
  bool in_bounds = true;

  int add_node(const Vec3& p) {
    node_pos.push_back(p);
    return static_cast<int>(node_pos.size()) - 1;
  }

  void check_bounds(const Vec3& p, double radius) {
    for (int a = 0; a < 3; ++a) {
      const double margin = radius + 1.5;
      if (p[a] < margin || p[a] > spec.grid[a] - 1 - margin) in_bounds = false;
    }
  }

  // Grow one branch and recurse. `lo..hi` is the class range owned by this
  // subtree; the branch itself is labeled lo (the trunk overrides with C).
  void grow(const Vec3& pos, const Vec3& dir, int level, int lo, int hi, int parent_node) {
    const double jitter = 1.0 + spec.length_jitter * (2.0 * rng.uniform() - 1.0);
    const double length = spec.trunk_length * std::pow(spec.length_taper, level) * jitter;
    const double radius =
        std::max(spec.min_radius, spec.trunk_radius * std::pow(spec.radius_taper, level));
    const Vec3 end = add(pos, scaled(dir, length));
    check_bounds(end, radius);

    TreeSegment seg;
    seg.a = pos;
    seg.b = end;
    seg.radius = radius;
    seg.label = level == 0 ? spec.num_classes : lo;
    segments.push_back(seg);

    const int end_node = add_node(end);
    edge_ends.emplace_back(parent_node, end_node);

    if (level == spec.depth) return;

    const double azimuth0 = rng.uniform(0.0, 2.0 * kPi);
    for (int child = 0; child < spec.branching; ++child) {
      // Contiguous class sub-range for this child; earlier children take the
      // larger share so every class eventually owns a dedicated subtree.
      const int span = hi - lo + 1;
      const int base = span / spec.branching, extra = span % spec.branching;
      const int child_lo = lo + child * base + std::min(child, extra);
      const int child_hi = child_lo + base - 1 + (child < extra ? 1 : 0);
      const double polar =
          rng.uniform(spec.branch_angle_deg[0], spec.branch_angle_deg[1]) * kPi / 180.0;
      const double azimuth =
          azimuth0 + child * 2.0 * kPi / spec.branching + rng.uniform(-0.3, 0.3);
      grow(end, tilted(dir, polar, azimuth), level + 1, std::max(child_lo, lo),
           std::min(std::max(child_hi, child_lo), hi), end_node);
    }
  }
};

std::vector<Voxel> line_voxels(const Vec3& a, const Vec3& b) {
  std::vector<Voxel> out;
  const double len = std::sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]) +
                               (b[2] - a[2]) * (b[2] - a[2]));
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.4)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const Voxel v{static_cast<int>(std::lround(a[0] + t * (b[0] - a[0]))),
                  static_cast<int>(std::lround(a[1] + t * (b[1] - a[1]))),
                  static_cast<int>(std::lround(a[2] + t * (b[2] - a[2])))};
    if (out.empty() || !(out.back() == v)) out.push_back(v);
  }
  return out;
}

}  // namespace

int nearest_segment_label(const std::vector<TreeSegment>& segments, const Vec3& p) {
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& seg : segments) {
    const double d2 = point_segment_dist2(p, seg.a, seg.b);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = seg.label;
    }
  }
  return best;
}

GeneratedTree generate_tree(const TreeSpec& spec) {
  if (spec.num_classes < 2) throw std::runtime_error("generate_tree: need num_classes >= 2");
  if (spec.depth < 0 || spec.branching < 2) throw std::runtime_error("generate_tree: bad spec");
  // Every class 1..C-1 needs its own subtree eventually.
  double leaves = 1;
  for (int i = 0; i < spec.depth; ++i) leaves *= spec.branching;
  if (spec.depth > 0 && leaves < spec.num_classes - 1) {
    throw std::runtime_error("generate_tree: depth too small for num_classes");
  }

  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    Rng rng = substream(spec.seed, "tree-geometry", static_cast<std::uint64_t>(attempt));
    Builder builder{spec, rng, {}, {}, {}, true};

    const Vec3 root{spec.grid[0] * 0.5, spec.grid[1] * 0.5, spec.trunk_radius + 2.5};
    const double tilt = rng.uniform(0.0, spec.trunk_tilt_deg) * kPi / 180.0;
    const Vec3 dir = tilted({0, 0, 1}, tilt, rng.uniform(0.0, 2.0 * kPi));
    builder.check_bounds(root, spec.trunk_radius);
    const int root_node = builder.add_node(root);
    builder.grow(root, dir, 0, 1, spec.num_classes - 1, root_node);
    if (!builder.in_bounds) continue;

    GeneratedTree tree;
    tree.segments = std::move(builder.segments);
    tree.volume = LabelVolume::zeros(spec.grid, {1, 1, 1}, spec.num_classes);

    // Rasterize: a voxel is foreground if some segment's tube covers it, and
    // takes the label of the globally nearest segment (ties to smaller id).
    LabelVolume& vol = tree.volume;
    double max_radius = 0;
    for (const auto& s : tree.segments) max_radius = std::max(max_radius, s.radius);
    std::vector<float> best_d2(vol.size(), std::numeric_limits<float>::infinity());
    std::vector<std::int32_t> best_seg(vol.size(), -1);
    std::vector<std::uint8_t> covered(vol.size(), 0);
    for (std::size_t si = 0; si < tree.segments.size(); ++si) {
      const auto& seg = tree.segments[si];
      const double pad = max_radius + 1.0;
      Voxel lo, hi;
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::floor(std::min(seg.a[a], seg.b[a]) - pad)));
        hi[a] = std::min(vol.dims[a] - 1,
                         static_cast<int>(std::ceil(std::max(seg.a[a], seg.b[a]) + pad)));
      }
      for (int z = lo[2]; z <= hi[2]; ++z) {
        for (int y = lo[1]; y <= hi[1]; ++y) {
          for (int x = lo[0]; x <= hi[0]; ++x) {
            const std::size_t i = vol.index(x, y, z);
            const double d2 =
                point_segment_dist2({double(x), double(y), double(z)}, seg.a, seg.b);
            if (d2 <= seg.radius * seg.radius) covered[i] = 1;
            if (d2 < best_d2[i]) {
              best_d2[i] = static_cast<float>(d2);
              best_seg[i] = static_cast<std::int32_t>(si);
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < vol.size(); ++i) {
      if (covered[i]) vol.data[i] = static_cast<std::uint8_t>(tree.segments[best_seg[i]].label);
    }

    // Ground-truth centerline graph over the same transform as the volume.
    const CoordTransform transform = make_transform(vol);
    SkeletonGraph& graph = tree.centerline;
    for (std::size_t ni = 0; ni < builder.node_pos.size(); ++ni) {
      SkeletonNode node;
      node.id = static_cast<int>(ni);
      const Vec3& p = builder.node_pos[ni];
      node.voxel = {static_cast<int>(std::lround(p[0])), static_cast<int>(std::lround(p[1])),
                    static_cast<int>(std::lround(p[2]))};
      node.coord = transform.to_normalized(node.voxel);
      node.label = vol.at(node.voxel) != 0
                       ? vol.at(node.voxel)
                       : nearest_segment_label(tree.segments,
                                               {double(node.voxel[0]), double(node.voxel[1]),
                                                double(node.voxel[2])});
      node.cluster = {node.voxel};
      graph.nodes.push_back(std::move(node));
    }
    for (std::size_t ei = 0; ei < builder.edge_ends.size(); ++ei) {
      SkeletonEdge edge;
      edge.id = static_cast<int>(ei);
      edge.u = builder.edge_ends[ei].first;
      edge.v = builder.edge_ends[ei].second;
      edge.label = tree.segments[ei].label;
      auto voxels = line_voxels(tree.segments[ei].a, tree.segments[ei].b);
      if (voxels.size() > 2) edge.path.assign(voxels.begin() + 1, voxels.end() - 1);
      graph.edges.push_back(std::move(edge));
    }
    graph.rebuild_adjacency();
    return tree;
  }
  throw std::runtime_error("generate_tree: geometry left the grid after max_retries; "
                           "enlarge the grid or shorten branches");
}

DatasetManifest generate_dataset(int n, std::uint64_t base_seed, const TreeSpec& spec,
                                 const std::filesystem::path& out_dir) {
  if (n < 1) throw std::runtime_error("generate_dataset: n must be >= 1");
  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.root = out_dir;
  for (int i = 0; i < n; ++i) {
    TreeSpec tree_spec = spec;
    tree_spec.seed = substream(base_seed, "tree", static_cast<std::uint64_t>(i)).next_u64();
    const GeneratedTree tree = generate_tree(tree_spec);

    char stem[32];
    std::snprintf(stem, sizeof(stem), "tree_%04d", i);
    DatasetEntry entry;
    entry.id = i;
    entry.seed = tree_spec.seed;
    entry.volume = std::string(stem) + ".json";
    entry.graph = std::string(stem) + "_graph.json";
    entry.centerline = std::string(stem) + "_centerline.json";
    save_volume(tree.volume, out_dir / entry.volume);
    save_graph(tree.centerline, out_dir / entry.centerline);

    SkeletonGraph graph = extract_graph(thin(tree.volume), make_transform(tree.volume));
    recover_labels(graph, tree.volume);
    save_graph(graph, out_dir / entry.graph);

    manifest.trees.push_back(std::move(entry));
  }

  // Deterministic 70/10/20 split by shuffled ids; floor rules, but train is
  // never empty.
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  Rng split_rng = substream(base_seed, "split");
  split_rng.shuffle(ids);
  std::size_t n_train = static_cast<std::size_t>(0.7 * n);
  std::size_t n_val = static_cast<std::size_t>(0.1 * n);
  if (n_train == 0) n_train = 1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < n_train) {
      manifest.train.push_back(ids[i]);
    } else if (i < n_train + n_val) {
      manifest.val.push_back(ids[i]);
    } else {
      manifest.test.push_back(ids[i]);
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
  nlohmann::json j;
  j["trees"] = nlohmann::json::array();
  for (const auto& t : manifest.trees) {
    j["trees"].push_back({{"id", t.id},
                          {"volume", t.volume},
                          {"graph", t.graph},
                          {"centerline", t.centerline},
                          {"seed", t.seed}});
  }
  j["split"] = {{"train", manifest.train}, {"val", manifest.val}, {"test", manifest.test}};
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write manifest " + manifest_path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest not found: " + manifest_path.string());
  nlohmann::json j;
  in >> j;
  DatasetManifest manifest;
  manifest.root = manifest_path.parent_path();
  for (const auto& jt : j.at("trees")) {
    DatasetEntry t;
    t.id = jt.at("id").get<int>();
    t.volume = jt.at("volume").get<std::string>();
    t.graph = jt.at("graph").get<std::string>();
    t.centerline = jt.value("centerline", "");
    t.seed = jt.at("seed").get<std::uint64_t>();
    manifest.trees.push_back(std::move(t));
  }
  manifest.train = j.at("split").at("train").get<std::vector<int>>();
  manifest.val = j.at("split").at("val").get<std::vector<int>>();
  manifest.test = j.at("split").at("test").get<std::vector<int>>();
  return manifest;
}

}  // namespace treelabel
