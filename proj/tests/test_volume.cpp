#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "treelabel/rng.hpp"
#include "treelabel/volume.hpp"

using namespace treelabel;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "treelabel_volume_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

LabelVolume random_volume(std::array<int, 3> dims, int num_classes, Rng& rng) {
  LabelVolume vol = LabelVolume::zeros(dims, {1.0, 1.0, 1.5}, num_classes);
  for (auto& v : vol.data) {
    v = static_cast<std::uint8_t>(rng.uniform_index(num_classes + 1));
  }
  return vol;
}

}  // namespace

TEST_CASE("all-zero header+blob loads as background volume") {
  const auto dir = temp_dir();
  LabelVolume vol = LabelVolume::zeros({4, 4, 4});
  save_volume(vol, dir / "zero.json");
  const auto loaded = load_volume(dir / "zero.json");
  CHECK(loaded.dims == std::array<int, 3>{4, 4, 4});
  CHECK(loaded.data == std::vector<std::uint8_t>(64, 0));
  CHECK(foreground_voxels(loaded).empty());
}

TEST_CASE("blob size mismatch is an error") {
  const auto dir = temp_dir();
  LabelVolume vol = LabelVolume::zeros({2, 2, 2});
  save_volume(vol, dir / "mismatch.json");
  // Truncate the blob to 7 bytes.
  std::filesystem::resize_file(dir / "mismatch.u8", 7);
  CHECK_THROWS_WITH_AS(load_volume(dir / "mismatch.json"),
                       doctest::Contains("does not match dims"), std::runtime_error);
}

TEST_CASE("missing file and out-of-range label are errors") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(load_volume(dir / "nope.json"), std::runtime_error);

  LabelVolume vol = LabelVolume::zeros({2, 2, 2}, {1, 1, 1}, 3);
  vol.data[3] = 3;
  save_volume(vol, dir / "overflow.json");
  // Rewrite the header to declare fewer classes than the blob contains.
  LabelVolume narrow = vol;
  narrow.num_classes = 2;
  save_volume(narrow, dir / "overflow.json");
  CHECK_THROWS_WITH_AS(load_volume(dir / "overflow.json"), doctest::Contains("exceeds"),
                       std::runtime_error);
}

TEST_CASE("save/load round-trip is bit-identical") {
  const auto dir = temp_dir();
  Rng rng(42);
  const auto vol = random_volume({32, 32, 32}, 19, rng);
  save_volume(vol, dir / "rt.json");
  const auto loaded = load_volume(dir / "rt.json");
  CHECK(loaded.dims == vol.dims);
  CHECK(loaded.spacing == vol.spacing);
  CHECK(loaded.num_classes == vol.num_classes);
  CHECK(loaded.data == vol.data);

  // A volume containing the top class keeps num_classes 19 in the header.
  CHECK(loaded.num_classes == 19);
}

TEST_CASE("single-voxel blob writes one byte") {
  const auto dir = temp_dir();
  save_volume(LabelVolume::zeros({1, 1, 1}), dir / "one.json");
  CHECK(std::filesystem::file_size(dir / "one.u8") == 1);
}

TEST_CASE("foreground_voxels matches a brute-force scan and is z-major ordered") {
  Rng rng(7);
  const auto vol = random_volume({9, 7, 5}, 4, rng);
  const auto fg = foreground_voxels(vol);

  std::size_t count = 0;
  for (auto v : vol.data) count += v != 0;
  CHECK(fg.size() == count);
  CHECK(fg.size() == foreground_count(vol));

  for (std::size_t i = 1; i < fg.size(); ++i) {
    const auto& a = fg[i - 1].first;
    const auto& b = fg[i].first;
    const auto key = [](const Voxel& v) { return std::array<int, 3>{v[2], v[1], v[0]}; };
    CHECK(key(a) < key(b));
  }

  // Scattering the labels back onto a zero volume reproduces the input.
  LabelVolume rebuilt = LabelVolume::zeros(vol.dims, vol.spacing, vol.num_classes);
  for (const auto& [v, label] : fg) rebuilt.at(v[0], v[1], v[2]) = label;
  CHECK(rebuilt.data == vol.data);
}

TEST_CASE("single-voxel and empty foreground transform edge cases") {
  LabelVolume vol = LabelVolume::zeros({8, 8, 8});
  CHECK_THROWS_AS(make_transform(vol), std::runtime_error);

  vol.at(3, 4, 5) = 2;
  const auto t = make_transform(vol);
  CHECK(t.scale == 1.0);  // degenerate box keeps scale 1
  const auto n = t.to_normalized(Voxel{3, 4, 5});
  CHECK(n[0] == doctest::Approx(0.0));
  CHECK(n[1] == doctest::Approx(0.0));
  CHECK(n[2] == doctest::Approx(0.0));
}

TEST_CASE("transform maps the longest axis to [-1,1] and honors spacing") {
  LabelVolume vol = LabelVolume::zeros({64, 8, 8});
  for (int x = 0; x < 64; ++x) vol.at(x, 2, 3) = 1;
  const auto t = make_transform(vol);
  CHECK(t.scale == doctest::Approx(2.0 / 63.0));
  CHECK(t.to_normalized(Voxel{0, 2, 3})[0] == doctest::Approx(-1.0));
  CHECK(t.to_normalized(Voxel{63, 2, 3})[0] == doctest::Approx(1.0));

  // Anisotropic z-spacing stretches the physical box before normalization.
  LabelVolume aniso = LabelVolume::zeros({16, 8, 16}, {1.0, 1.0, 2.0});
  for (int z = 0; z < 12; ++z) aniso.at(1, 1, z) = 1;
  for (int x = 0; x < 16; ++x) aniso.at(x, 1, 0) = 1;
  // x extent: 15 mm, z extent: 11 * 2 = 22 mm -> z wins.
  const auto ta = make_transform(aniso);
  CHECK(ta.scale == doctest::Approx(2.0 / 22.0));
}

TEST_CASE("random tree-ish volume: normalized foreground stays in the unit cube "
          "and the inverse transform round-trips") {
  Rng rng(123);
  const auto vol = random_volume({20, 30, 25}, 6, rng);
  const auto t = make_transform(vol);
  for (const auto& [v, label] : foreground_voxels(vol)) {
    const auto n = t.to_normalized(v);
    for (int a = 0; a < 3; ++a) {
      CHECK(n[a] >= -1.0 - 1e-12);
      CHECK(n[a] <= 1.0 + 1e-12);
    }
    const auto back = t.to_voxel(n);
    for (int a = 0; a < 3; ++a) {
      CHECK(back[a] == doctest::Approx(v[a]).epsilon(1e-9));
      CHECK(std::lround(back[a]) == v[a]);
    }
  }
}
