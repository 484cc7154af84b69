#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <set>

#include "treelabel/skeleton.hpp"
#include "treelabel/synth.hpp"

using namespace treelabel;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("depth 0 is a single tube labeled with the trunk class") {
  TreeSpec spec;
  spec.seed = 3;
  spec.depth = 0;
  spec.grid = {32, 32, 32};
  spec.num_classes = 8;
  const auto tree = generate_tree(spec);
  REQUIRE(tree.segments.size() == 1);
  std::set<int> labels;
  for (auto v : tree.volume.data) {
    if (v != 0) labels.insert(v);
  }
  CHECK(labels == std::set<int>{8});
  CHECK(tree.centerline.nodes.size() == 2);
  CHECK(tree.centerline.edges.size() == 1);
}

TEST_CASE("same seed generates identical volume bytes") {
  TreeSpec spec;
  spec.seed = 99;
  const auto a = generate_tree(spec);
  const auto b = generate_tree(spec);
  CHECK(a.volume.data == b.volume.data);
  CHECK(a.segments.size() == b.segments.size());

  TreeSpec other = spec;
  other.seed = 100;
  const auto c = generate_tree(other);
  CHECK(a.volume.data != c.volume.data);
}

TEST_CASE("depth 4, 8 classes: every class present, one 26-connected component") {
  TreeSpec spec;
  spec.seed = 7;
  const auto tree = generate_tree(spec);
  std::set<int> labels;
  for (auto v : tree.volume.data) {
    if (v != 0) labels.insert(v);
  }
  CHECK(labels == std::set<int>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(count_components_26(tree.volume) == 1);
}

TEST_CASE("depth too shallow for the class count is rejected") {
  TreeSpec spec;
  spec.depth = 2;
  spec.num_classes = 8;  // 4 leaves < 7 classes
  CHECK_THROWS_WITH_AS(generate_tree(spec), doctest::Contains("depth too small"),
                       std::runtime_error);
}

TEST_CASE("every foreground voxel carries the label of its nearest centerline segment") {
  TreeSpec spec;
  spec.seed = 11;
  spec.depth = 3;
  spec.grid = {40, 40, 40};
  spec.num_classes = 5;
  spec.trunk_length = 10;
  spec.trunk_radius = 2.0;
  const auto tree = generate_tree(spec);
  for (const auto& [v, label] : foreground_voxels(tree.volume)) {
    const int oracle =
        nearest_segment_label(tree.segments, {double(v[0]), double(v[1]), double(v[2])});
    CHECK(label == oracle);
  }
}

TEST_CASE("skeleton of a generated tree lands near the generator's node count") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    TreeSpec spec;
    spec.seed = seed;
    spec.depth = 3;
    spec.grid = {56, 56, 56};
    spec.num_classes = 5;
    spec.trunk_radius = 2.4;  // radius <= 3 per the tolerance this documents
    const auto tree = generate_tree(spec);
    const auto graph = extract_graph(thin(tree.volume), make_transform(tree.volume));

    // Generator nodes: root + every bifurcation + tips.
    const std::size_t expected = tree.centerline.nodes.size();
    const std::size_t got = graph.nodes.size();
    const std::size_t lo = expected - std::min<std::size_t>(expected, 2);
    CHECK(got >= lo);
    CHECK(got <= expected + 2);
  }
}

TEST_CASE("dataset generation: split rules, manifest round-trip, determinism") {
  const auto dir = std::filesystem::temp_directory_path() / "treelabel_synth_dataset";
  std::filesystem::remove_all(dir);
  TreeSpec spec;
  spec.depth = 2;
  spec.num_classes = 3;
  spec.grid = {40, 40, 40};

  const auto manifest = generate_dataset(10, 77, spec, dir / "a");
  CHECK(manifest.trees.size() == 10);
  CHECK(manifest.train.size() == 7);
  CHECK(manifest.val.size() == 1);
  CHECK(manifest.test.size() == 2);

  const auto loaded = load_manifest(dir / "a" / "manifest.json");
  CHECK(loaded.train == manifest.train);
  CHECK(loaded.val == manifest.val);
  CHECK(loaded.test == manifest.test);
  REQUIRE(loaded.trees.size() == manifest.trees.size());
  for (std::size_t i = 0; i < loaded.trees.size(); ++i) {
    CHECK(loaded.trees[i].volume == manifest.trees[i].volume);
    CHECK(loaded.trees[i].seed == manifest.trees[i].seed);
    // Graph and volume files must exist and load.
    CHECK(std::filesystem::exists(dir / "a" / loaded.trees[i].graph));
    CHECK(std::filesystem::exists(dir / "a" / loaded.trees[i].volume));
  }

  // Regenerating with the same base seed reproduces every byte.
  generate_dataset(10, 77, spec, dir / "b");
  for (const auto& t : manifest.trees) {
    CHECK(slurp(dir / "a" / t.volume) == slurp(dir / "b" / t.volume));
    const auto blob = std::filesystem::path(t.volume).stem().string() + ".u8";
    CHECK(slurp(dir / "a" / blob) == slurp(dir / "b" / blob));
    CHECK(slurp(dir / "a" / t.graph) == slurp(dir / "b" / t.graph));
  }
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));

  // n = 1: train gets the single tree (floor rules would leave it empty).
  const auto tiny = generate_dataset(1, 5, spec, dir / "tiny");
  CHECK(tiny.train == std::vector<int>{0});
  CHECK(tiny.val.empty());
  CHECK(tiny.test.empty());
}
