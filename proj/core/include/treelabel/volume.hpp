#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treelabel {

using Voxel = std::array<int, 3>;  // x, y, z integer voxel coordinate
using Vec3 = std::array<double, 3>;

/// Dense 3D grid of class labels. 0 is background, 1..num_classes are
/// foreground classes. Data is x-fastest: index = x + y*dx + z*dx*dy.
/// Immutable by convention after load; safe to share across threads.
struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel, z may differ
  int num_classes = 19;
  std::vector<std::uint8_t> data;

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(y) * dims[0] +
           static_cast<std::size_t>(z) * dims[0] * dims[1];
  }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }
  std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
  std::uint8_t at(const Voxel& v) const { return at(v[0], v[1], v[2]); }

  static LabelVolume zeros(std::array<int, 3> dims, std::array<double, 3> spacing = {1, 1, 1},
                           int num_classes = 19);
};

/// Maps voxel coordinates into the normalized model space: the foreground
/// bounding box, scaled by physical spacing, is centered and isotropically
/// scaled so the longest axis spans [-1, 1]. One scale for all axes keeps
/// Euclidean distances meaningful for ball queries.
struct CoordTransform {
  Vec3 offset{0, 0, 0};                   // physical-space center of the foreground box
  double scale = 1.0;                     // normalized units per mm
  std::array<double, 3> spacing{1, 1, 1};

  Vec3 to_normalized(const Voxel& v) const {
    return {(v[0] * spacing[0] - offset[0]) * scale,
            (v[1] * spacing[1] - offset[1]) * scale,
            (v[2] * spacing[2] - offset[2]) * scale};
  }
  Vec3 to_normalized(const Vec3& p) const {
    return {(p[0] * spacing[0] - offset[0]) * scale,
            (p[1] * spacing[1] - offset[1]) * scale,
            (p[2] * spacing[2] - offset[2]) * scale};
  }
  /// Inverse map back to continuous voxel coordinates.
  Vec3 to_voxel(const Vec3& n) const {
    return {(n[0] / scale + offset[0]) / spacing[0],
            (n[1] / scale + offset[1]) / spacing[1],
            (n[2] / scale + offset[2]) / spacing[2]};
  }
};

/// Load a volume from a JSON header (<name>.json) plus raw byte blob.
/// Throws std::runtime_error on missing files, header/blob size mismatch,
/// or a label value exceeding the declared num_classes.
LabelVolume load_volume(const std::filesystem::path& header_path);

/// Write the JSON header and blob next to each other. Round-trips with
/// load_volume bit-exactly.
void save_volume(const LabelVolume& vol, const std::filesystem::path& header_path);

/// All voxels with label != 0, in z-major (z, then y, then x) order.
std::vector<std::pair<Voxel, std::uint8_t>> foreground_voxels(const LabelVolume& vol);

/// Count of nonzero voxels without materializing the list.
std::size_t foreground_count(const LabelVolume& vol);

/// Build the voxel -> normalized-space transform from the foreground
/// bounding box. Throws if the volume has no foreground. A single-voxel
/// (or otherwise degenerate) foreground gets scale 1 centered on the box.
CoordTransform make_transform(const LabelVolume& vol);

/// Collapse labels to {0, 1}.
LabelVolume binarize(const LabelVolume& vol);

}  // namespace treelabel
