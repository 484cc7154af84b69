#include "treelabel/volume.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace treelabel {

using nlohmann::json;

LabelVolume LabelVolume::zeros(std::array<int, 3> dims, std::array<double, 3> spacing,
                               int num_classes) {
  LabelVolume vol;
  vol.dims = dims;
  vol.spacing = spacing;
  vol.num_classes = num_classes;
  vol.data.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  return vol;
}

LabelVolume load_volume(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) {
    throw std::runtime_error("volume header not found: " + header_path.string());
  }
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad volume header " + header_path.string() + ": " + e.what());
  }

  LabelVolume vol;
  const auto dims = header.at("dims");
  const auto spacing = header.at("spacing");
  if (dims.size() != 3 || spacing.size() != 3) {
    throw std::runtime_error("volume header needs 3-element dims and spacing");
  }
  for (int i = 0; i < 3; ++i) {
    vol.dims[i] = dims[i].get<int>();
    vol.spacing[i] = spacing[i].get<double>();
    if (vol.dims[i] <= 0) throw std::runtime_error("volume dims must be positive");
    if (!(vol.spacing[i] > 0)) throw std::runtime_error("volume spacing must be positive");
  }
  vol.num_classes = header.at("num_classes").get<int>();
  if (vol.num_classes < 1 || vol.num_classes > 255) {
    throw std::runtime_error("num_classes out of range [1, 255]");
  }

  const auto blob_name = header.at("blob").get<std::string>();
  const auto blob_path = header_path.parent_path() / blob_name;
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) {
    throw std::runtime_error("volume blob not found: " + blob_path.string());
  }
  blob.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(blob.tellg());
  blob.seekg(0, std::ios::beg);
  if (bytes != vol.size()) {
    throw std::runtime_error("volume blob size " + std::to_string(bytes) +
                             " does not match dims product " + std::to_string(vol.size()));
  }
  vol.data.resize(bytes);
  blob.read(reinterpret_cast<char*>(vol.data.data()), static_cast<std::streamsize>(bytes));
  if (!blob) throw std::runtime_error("short read on volume blob " + blob_path.string());

  for (std::uint8_t v : vol.data) {
    if (v > vol.num_classes) {
      throw std::runtime_error("label value " + std::to_string(int(v)) +
                               " exceeds declared num_classes " +
                               std::to_string(vol.num_classes));
    }
  }
  return vol;
}

void save_volume(const LabelVolume& vol, const std::filesystem::path& header_path) {
  if (vol.data.size() != vol.size()) {
    throw std::runtime_error("volume data length does not match dims");
  }
  auto blob_path = header_path;
  blob_path.replace_extension(".u8");

  json header;
  header["dims"] = vol.dims;
  header["spacing"] = vol.spacing;
  header["num_classes"] = vol.num_classes;
  header["blob"] = blob_path.filename().string();

  std::ofstream out(header_path);
  if (!out) throw std::runtime_error("cannot write volume header " + header_path.string());
  out << header.dump(2) << "\n";
  if (!out) throw std::runtime_error("I/O failure writing " + header_path.string());

  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write volume blob " + blob_path.string());
  blob.write(reinterpret_cast<const char*>(vol.data.data()),
             static_cast<std::streamsize>(vol.data.size()));
  if (!blob) throw std::runtime_error("I/O failure writing " + blob_path.string());
}

std::vector<std::pair<Voxel, std::uint8_t>> foreground_voxels(const LabelVolume& vol) {
  std::vector<std::pair<Voxel, std::uint8_t>> out;
  std::size_t i = 0;
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x, ++i) {
        if (vol.data[i] != 0) out.push_back({{x, y, z}, vol.data[i]});
      }
    }
  }
  return out;
}

std::size_t foreground_count(const LabelVolume& vol) {
  return static_cast<std::size_t>(
      std::count_if(vol.data.begin(), vol.data.end(), [](std::uint8_t v) { return v != 0; }));
}

CoordTransform make_transform(const LabelVolume& vol) {
  Voxel lo{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
           std::numeric_limits<int>::max()};
  Voxel hi{std::numeric_limits<int>::min(), std::numeric_limits<int>::min(),
           std::numeric_limits<int>::min()};
  bool any = false;
  std::size_t i = 0;
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x, ++i) {
        if (vol.data[i] == 0) continue;
        any = true;
        lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
        hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
      }
    }
  }
  if (!any) throw std::runtime_error("make_transform: volume has no foreground");

  CoordTransform t;
  t.spacing = vol.spacing;
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double span = (hi[a] - lo[a]) * vol.spacing[a];
    t.offset[a] = 0.5 * (hi[a] + lo[a]) * vol.spacing[a];
    extent = std::max(extent, span);
  }
  t.scale = extent > 0.0 ? 2.0 / extent : 1.0;
  return t;
}

LabelVolume binarize(const LabelVolume& vol) {
  LabelVolume out = vol;
  out.num_classes = 1;
  for (auto& v : out.data) v = v != 0 ? 1 : 0;
  return out;
}

}  // namespace treelabel
