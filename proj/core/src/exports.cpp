#include "treelabel/exports.hpp"

#include <array>
#include <fstream>
#include <stdexcept>

namespace treelabel {

namespace {

// One color per class id 1..19 (class 19 is the pale trunk color).
constexpr std::array<std::array<int, 3>, 19> kPalette = {{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
    {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
    {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
    {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {173, 216, 230},
}};

}  // namespace

void write_label_ply(const LabelVolume& vol, const std::filesystem::path& path) {
  const auto voxels = foreground_voxels(vol);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write PLY " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << voxels.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (const auto& [v, label] : voxels) {
    const auto& c = kPalette[(label - 1) % kPalette.size()];
    out << v[0] * vol.spacing[0] << " " << v[1] * vol.spacing[1] << " " << v[2] * vol.spacing[2]
        << " " << c[0] << " " << c[1] << " " << c[2] << "\n";
  }
  if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

void write_prediction_csv(const LabelVolume& pred, const LabelVolume& truth,
                          const std::filesystem::path& path) {
  if (pred.dims != truth.dims) throw std::runtime_error("prediction csv: dims mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write CSV " + path.string());
  out << "x,y,z,true,pred\n";
  std::size_t i = 0;
  for (int z = 0; z < truth.dims[2]; ++z) {
    for (int y = 0; y < truth.dims[1]; ++y) {
      for (int x = 0; x < truth.dims[0]; ++x, ++i) {
        if (truth.data[i] == 0 && pred.data[i] == 0) continue;
        out << x << "," << y << "," << z << "," << int(truth.data[i]) << ","
            << int(pred.data[i]) << "\n";
      }
    }
  }
  if (!out) throw std::runtime_error("I/O failure writing " + path.string());
}

}  // namespace treelabel
