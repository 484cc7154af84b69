#include "treelabel/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace treelabel {

namespace {

// Offsets of the 26-neighborhood, scan order (z, y, x ascending).
struct NeighborTables {
  std::array<std::array<int, 3>, 26> offsets;   // excludes the center
  // 26-adjacency between neighborhood cells (index into offsets).
  std::array<std::vector<int>, 26> adj26;
  // 6-adjacency restricted to the 18-neighborhood (|dx|+|dy|+|dz| <= 2).
  std::array<std::vector<int>, 26> adj6_n18;
  std::array<bool, 26> in_n18{};
  std::array<bool, 26> is_face{};

  NeighborTables() {
    int n = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          offsets[n] = {dx, dy, dz};
          const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
          in_n18[n] = manhattan <= 2;
          is_face[n] = manhattan == 1;
          ++n;
        }
    for (int i = 0; i < 26; ++i) {
      for (int j = 0; j < 26; ++j) {
        if (i == j) continue;
        const int ax = std::abs(offsets[i][0] - offsets[j][0]);
        const int ay = std::abs(offsets[i][1] - offsets[j][1]);
        const int az = std::abs(offsets[i][2] - offsets[j][2]);
        if (ax <= 1 && ay <= 1 && az <= 1) adj26[i].push_back(j);
        if (ax + ay + az == 1 && in_n18[i] && in_n18[j]) adj6_n18[i].push_back(j);
      }
    }
  }
};

const NeighborTables& tables() {
  static const NeighborTables t;
  return t;
}

inline bool fg_at(const LabelVolume& mask, int x, int y, int z) {
  return mask.in_bounds(x, y, z) && mask.data[mask.index(x, y, z)] != 0;
}

int count_fg_neighbors_26(const LabelVolume& mask, int x, int y, int z) {
  const auto& t = tables();
  int count = 0;
  for (const auto& o : t.offsets) {
    if (fg_at(mask, x + o[0], y + o[1], z + o[2])) ++count;
  }
  return count;
}

}  // namespace

bool is_simple_voxel(const LabelVolume& mask, int x, int y, int z) {
  const auto& t = tables();
  std::array<bool, 26> fg;
  for (int i = 0; i < 26; ++i) {
    const auto& o = t.offsets[i];
    fg[i] = fg_at(mask, x + o[0], y + o[1], z + o[2]);
  }

  // Exactly one 26-connected foreground component among the neighbors.
  {
    int components = 0;
    std::array<bool, 26> seen{};
    for (int i = 0; i < 26; ++i) {
      if (!fg[i] || seen[i]) continue;
      if (++components > 1) return false;
      std::array<int, 26> stack;
      int top = 0;
      stack[top++] = i;
      seen[i] = true;
      while (top > 0) {
        const int cur = stack[--top];
        for (int nb : t.adj26[cur]) {
          if (fg[nb] && !seen[nb]) {
            seen[nb] = true;
            stack[top++] = nb;
          }
        }
      }
    }
    if (components != 1) return false;
  }

  // Exactly one 6-connected background component within the 18-neighborhood,
  // touching a face neighbor (Bertrand-Malandain characterization).
  {
    int components = 0;
    std::array<bool, 26> seen{};
    for (int i = 0; i < 26; ++i) {
      if (!t.is_face[i] || fg[i] || seen[i]) continue;
      ++components;
      if (components > 1) return false;
      std::array<int, 26> stack;
      int top = 0;
      stack[top++] = i;
      seen[i] = true;
      while (top > 0) {
        const int cur = stack[--top];
        for (int nb : t.adj6_n18[cur]) {
          if (!fg[nb] && !seen[nb]) {
            seen[nb] = true;
            stack[top++] = nb;
          }
        }
      }
    }
    if (components != 1) return false;  // 0 means interior voxel: not deletable
  }
  return true;
}

LabelVolume thin(const LabelVolume& vol) {
  LabelVolume mask = binarize(vol);

  // Six directional sub-cycles per pass; repeat to a fixed point.
  static constexpr std::array<std::array<int, 3>, 6> kDirections = {{
      {0, 0, -1}, {0, 0, 1}, {0, -1, 0}, {0, 1, 0}, {-1, 0, 0}, {1, 0, 0},
  }};

  std::vector<Voxel> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : kDirections) {
      candidates.clear();
      std::size_t i = 0;
      for (int z = 0; z < mask.dims[2]; ++z) {
        for (int y = 0; y < mask.dims[1]; ++y) {
          for (int x = 0; x < mask.dims[0]; ++x, ++i) {
            if (mask.data[i] == 0) continue;
            if (fg_at(mask, x + dir[0], y + dir[1], z + dir[2])) continue;  // not a border here
            const int nb = count_fg_neighbors_26(mask, x, y, z);
            if (nb <= 1) continue;  // endpoint or isolated voxel, protected
            if (is_simple_voxel(mask, x, y, z)) candidates.push_back({x, y, z});
          }
        }
      }
      // Sequential re-check: earlier deletions in this sub-cycle can make a
      // candidate unsafe, so each is verified against the current mask.
      for (const Voxel& v : candidates) {
        const int nb = count_fg_neighbors_26(mask, v[0], v[1], v[2]);
        if (nb <= 1) continue;
        if (!is_simple_voxel(mask, v[0], v[1], v[2])) continue;
        mask.data[mask.index(v[0], v[1], v[2])] = 0;
        changed = true;
      }
    }
  }
  return mask;
}

std::size_t count_components_26(const LabelVolume& mask) {
  const auto& t = tables();
  std::vector<std::uint32_t> parent(mask.size());
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  };
  auto unite = [&](std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  std::size_t i = 0;
  for (int z = 0; z < mask.dims[2]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[0]; ++x, ++i) {
        if (mask.data[i] == 0) continue;
        for (const auto& o : t.offsets) {
          const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
          if (fg_at(mask, nx, ny, nz)) {
            unite(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(mask.index(nx, ny, nz)));
          }
        }
      }
    }
  }
  std::size_t count = 0;
  for (i = 0; i < mask.size(); ++i) {
    if (mask.data[i] != 0 && find(static_cast<std::uint32_t>(i)) == i) ++count;
  }
  return count;
}

void SkeletonGraph::rebuild_adjacency() {
  adjacency.assign(nodes.size(), {});
  for (const auto& e : edges) {
    adjacency[e.u].push_back(e.v);
    if (e.u != e.v) adjacency[e.v].push_back(e.u);
  }
}

namespace {

struct VoxelGrid {
  const LabelVolume& mask;
  std::vector<std::int32_t> degree;  // -1 for background

  explicit VoxelGrid(const LabelVolume& m) : mask(m), degree(m.size(), -1) {
    std::size_t i = 0;
    for (int z = 0; z < m.dims[2]; ++z)
      for (int y = 0; y < m.dims[1]; ++y)
        for (int x = 0; x < m.dims[0]; ++x, ++i)
          if (m.data[i] != 0) degree[i] = count_fg_neighbors_26(m, x, y, z);
  }

  std::vector<Voxel> neighbors(const Voxel& v) const {
    std::vector<Voxel> out;
    for (const auto& o : tables().offsets) {
      const int nx = v[0] + o[0], ny = v[1] + o[1], nz = v[2] + o[2];
      if (fg_at(mask, nx, ny, nz)) out.push_back({nx, ny, nz});
    }
    return out;
  }
  int degree_at(const Voxel& v) const { return degree[mask.index(v[0], v[1], v[2])]; }
};

Voxel centroid_nearest(const std::vector<Voxel>& cluster) {
  Vec3 c{0, 0, 0};
  for (const auto& v : cluster)
    for (int a = 0; a < 3; ++a) c[a] += v[a];
  for (int a = 0; a < 3; ++a) c[a] /= static_cast<double>(cluster.size());
  Voxel best = cluster.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& v : cluster) {
    const double dx = v[0] - c[0], dy = v[1] - c[1], dz = v[2] - c[2];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

}  // namespace

SkeletonGraph extract_graph(const LabelVolume& skeleton_mask, const CoordTransform& transform) {
  SkeletonGraph graph;
  const VoxelGrid grid(skeleton_mask);
  const LabelVolume& mask = skeleton_mask;

  constexpr std::int32_t kUnassigned = -1;
  std::vector<std::int32_t> node_of(mask.size(), kUnassigned);  // voxel -> node id
  std::vector<std::uint8_t> on_path(mask.size(), 0);

  // Nodes: degree != 2 voxels; 26-adjacent junction voxels (degree >= 3)
  // merge into one cluster. Endpoints stay singletons.
  std::size_t idx = 0;
  for (int z = 0; z < mask.dims[2]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[0]; ++x, ++idx) {
        if (grid.degree[idx] < 0 || grid.degree[idx] == 2) continue;
        if (node_of[idx] != kUnassigned) continue;
        const int id = static_cast<int>(graph.nodes.size());
        SkeletonNode node;
        node.id = id;
        node.cluster.push_back({x, y, z});
        node_of[idx] = id;
        if (grid.degree[idx] >= 3) {
          for (std::size_t head = 0; head < node.cluster.size(); ++head) {
            for (const Voxel& nb : grid.neighbors(node.cluster[head])) {
              const std::size_t nb_idx = mask.index(nb[0], nb[1], nb[2]);
              if (grid.degree[nb_idx] >= 3 && node_of[nb_idx] == kUnassigned) {
                node_of[nb_idx] = id;
                node.cluster.push_back(nb);
              }
            }
          }
        }
        node.voxel = centroid_nearest(node.cluster);
        node.coord = transform.to_normalized(node.voxel);
        graph.nodes.push_back(std::move(node));
      }
    }
  }

  auto add_edge = [&](int u, int v, std::vector<Voxel> path) {
    SkeletonEdge e;
    e.id = static_cast<int>(graph.edges.size());
    e.u = u;
    e.v = v;
    e.path = std::move(path);
    graph.edges.push_back(std::move(e));
  };

  // Chains: walk maximal degree-2 runs between node clusters.
  std::vector<std::pair<int, int>> direct_contacts;  // dedup for adjacent clusters
  for (const auto& node : graph.nodes) {
    for (const Voxel& member : node.cluster) {
      for (const Voxel& nb : grid.neighbors(member)) {
        const std::size_t nb_idx = mask.index(nb[0], nb[1], nb[2]);
        const int other = node_of[nb_idx];
        if (other != kUnassigned) {
          if (other == node.id) continue;  // intra-cluster contact
          const std::pair<int, int> pair_key{std::min(node.id, other), std::max(node.id, other)};
          if (std::find(direct_contacts.begin(), direct_contacts.end(), pair_key) ==
              direct_contacts.end()) {
            direct_contacts.push_back(pair_key);
            add_edge(node.id, other, {});
          }
          continue;
        }
        if (on_path[nb_idx]) continue;
        // Trace the chain starting at nb away from this cluster.
        std::vector<Voxel> path;
        Voxel prev = member;
        Voxel cur = nb;
        int end_node = -1;
        while (true) {
          path.push_back(cur);
          on_path[mask.index(cur[0], cur[1], cur[2])] = 1;
          Voxel next{-1, -1, -1};
          bool found = false;
          for (const Voxel& cand : grid.neighbors(cur)) {
            if (cand == prev) continue;
            found = true;
            next = cand;
            break;  // degree-2 voxel: exactly one neighbor besides prev
          }
          if (!found) {
            // Chain ended without reaching a node (cannot happen: the far
            // end would be degree 1, hence a node). Guard anyway.
            break;
          }
          const std::size_t next_idx = mask.index(next[0], next[1], next[2]);
          if (node_of[next_idx] != kUnassigned) {
            end_node = node_of[next_idx];
            break;
          }
          prev = cur;
          cur = next;
        }
        if (end_node >= 0) add_edge(node.id, end_node, std::move(path));
      }
    }
  }

  // Pure cycles: every voxel has degree 2 and none was traced. Insert a
  // breaker node at the smallest remaining voxel of each cycle.
  idx = 0;
  for (int z = 0; z < mask.dims[2]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[0]; ++x, ++idx) {
        if (grid.degree[idx] != 2 || on_path[idx] || node_of[idx] != kUnassigned) continue;
        const int id = static_cast<int>(graph.nodes.size());
        const Voxel start{x, y, z};
        SkeletonNode node;
        node.id = id;
        node.voxel = start;
        node.cluster.push_back(start);
        node.coord = transform.to_normalized(start);
        node_of[idx] = id;
        graph.nodes.push_back(std::move(node));

        std::vector<Voxel> path;
        Voxel prev = start;
        Voxel cur = grid.neighbors(start).front();
        while (node_of[mask.index(cur[0], cur[1], cur[2])] == kUnassigned) {
          path.push_back(cur);
          on_path[mask.index(cur[0], cur[1], cur[2])] = 1;
          for (const Voxel& cand : grid.neighbors(cur)) {
            if (cand != prev) {
              prev = cur;
              cur = cand;
              break;
            }
          }
        }
        add_edge(id, id, std::move(path));
      }
    }
  }

  graph.rebuild_adjacency();
  return graph;
}

void recover_labels(SkeletonGraph& graph, const LabelVolume& vol) {
  auto label_at = [&](const Voxel& v) {
    const std::uint8_t label = vol.at(v);
    if (label == 0) {
      throw std::runtime_error("recover_labels: graph voxel on background at (" +
                               std::to_string(v[0]) + "," + std::to_string(v[1]) + "," +
                               std::to_string(v[2]) + ")");
    }
    return static_cast<int>(label);
  };
  for (auto& node : graph.nodes) node.label = label_at(node.voxel);
  for (auto& edge : graph.edges) {
    std::map<int, std::size_t> votes;
    if (edge.path.empty()) {
      ++votes[graph.nodes[edge.u].label];
      ++votes[graph.nodes[edge.v].label];
    } else {
      for (const Voxel& v : edge.path) ++votes[label_at(v)];
    }
    // Majority; ties go to the smallest class id (map iterates ascending).
    int best = 0;
    std::size_t best_count = 0;
    for (const auto& [cls, count] : votes) {
      if (count > best_count) {
        best = cls;
        best_count = count;
      }
    }
    edge.label = best;
  }
}

void save_graph(const SkeletonGraph& graph, const std::filesystem::path& path) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::json jn;
    jn["id"] = n.id;
    jn["voxel"] = n.voxel;
    jn["coord"] = n.coord;
    jn["label"] = n.label;
    jn["cluster"] = n.cluster;
    j["nodes"].push_back(std::move(jn));
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges) {
    nlohmann::json je;
    je["id"] = e.id;
    je["u"] = e.u;
    je["v"] = e.v;
    je["label"] = e.label;
    je["path"] = e.path;
    j["edges"].push_back(std::move(je));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

SkeletonGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("graph file not found: " + path.string());
  nlohmann::json j;
  in >> j;

  SkeletonGraph graph;
  for (const auto& jn : j.at("nodes")) {
    SkeletonNode n;
    n.id = jn.at("id").get<int>();
    n.voxel = jn.at("voxel").get<Voxel>();
    n.coord = jn.at("coord").get<Vec3>();
    n.label = jn.at("label").get<int>();
    if (jn.contains("cluster")) {
      n.cluster = jn.at("cluster").get<std::vector<Voxel>>();
    } else {
      n.cluster = {n.voxel};
    }
    graph.nodes.push_back(std::move(n));
  }
  for (const auto& je : j.at("edges")) {
    SkeletonEdge e;
    e.id = je.at("id").get<int>();
    e.u = je.at("u").get<int>();
    e.v = je.at("v").get<int>();
    e.label = je.at("label").get<int>();
    e.path = je.at("path").get<std::vector<Voxel>>();
    if (e.u < 0 || e.u >= static_cast<int>(graph.nodes.size()) || e.v < 0 ||
        e.v >= static_cast<int>(graph.nodes.size())) {
      throw std::runtime_error("graph edge with dangling endpoint in " + path.string());
    }
    graph.edges.push_back(std::move(e));
  }
  graph.rebuild_adjacency();
  return graph;
}

}  // namespace treelabel
