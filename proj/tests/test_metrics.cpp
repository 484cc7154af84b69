#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "treelabel/metrics.hpp"
#include "treelabel/rng.hpp"
#include "treelabel/spatial.hpp"
#include "treelabel/synth.hpp"

using namespace treelabel;

TEST_CASE("accuracy: exact, half, and brute-force random agreement") {
  const std::vector<int> a{1, 2, 3, 4};
  CHECK(accuracy(a, a) == 100.0);

  const std::vector<int> half{1, 2, 9, 9};
  CHECK(accuracy(half, a) == 50.0);

  Rng rng(5);
  std::vector<int> pred(1000), truth(1000);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = static_cast<int>(rng.uniform_index(6));
    truth[i] = static_cast<int>(rng.uniform_index(6)) + 1;  // keep truth nonzero
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  CHECK(accuracy(pred, truth) == doctest::Approx(100.0 * correct / 1000.0));

  CHECK_THROWS_AS(accuracy(pred, std::vector<int>{1, 2}), std::runtime_error);
  CHECK_THROWS_AS(accuracy(std::vector<int>{1}, std::vector<int>{0}, {0}), std::runtime_error);
}

TEST_CASE("accuracy ignores listed true labels") {
  const std::vector<int> pred{1, 1, 1, 1};
  const std::vector<int> truth{1, 0, 0, 2};
  CHECK(accuracy(pred, truth, {0}) == 50.0);  // two scored entries, one correct
}

TEST_CASE("dice identities and hand-computed confusion example") {
  const std::vector<int> same{1, 2, 2, 3};
  CHECK(dice(same, same, {1, 2, 3}, DiceMode::kMicro) == 100.0);
  CHECK(dice(same, same, {1, 2, 3}, DiceMode::kMacro) == 100.0);

  // pred=[1,1,2,2] vs true=[1,2,1,2]: TP=2, FP=2, FN=2 -> micro 50%.
  const std::vector<int> pred{1, 1, 2, 2};
  const std::vector<int> truth{1, 2, 1, 2};
  CHECK(dice(pred, truth, {1, 2}, DiceMode::kMicro) == doctest::Approx(50.0));

  const std::vector<int> disjoint{4, 4, 4, 4};
  CHECK(dice(disjoint, truth, {1, 2, 4}, DiceMode::kMicro) == 0.0);

  CHECK_THROWS_AS(dice(pred, truth, {}, DiceMode::kMicro), std::runtime_error);
}

TEST_CASE("micro dice over all classes equals accuracy on fully classified vectors") {
  Rng rng(17);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 50 + rng.uniform_index(200);
    std::vector<int> pred(n), truth(n);
    std::set<int> classes;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = 1 + static_cast<int>(rng.uniform_index(8));
      truth[i] = 1 + static_cast<int>(rng.uniform_index(8));
      classes.insert(pred[i]);
      classes.insert(truth[i]);
    }
    const double acc = accuracy(pred, truth);
    const double micro = dice(pred, truth, classes, DiceMode::kMicro);
    CHECK(std::abs(acc - micro) < 1e-9);
  }
}

TEST_CASE("macro dice skips absent classes") {
  const std::vector<int> pred{1, 1, 2};
  const std::vector<int> truth{1, 2, 2};
  // class 9 appears nowhere: skipped, mean over classes 1 and 2 only.
  const double macro = dice(pred, truth, {1, 2, 9}, DiceMode::kMacro);
  // class 1: TP=1 FP=1 FN=0 -> 2/3; class 2: TP=1 FP=0 FN=1 -> 2/3.
  CHECK(macro == doctest::Approx(100.0 * 2.0 / 3.0));
}

TEST_CASE("graph metrics: identical, one-wrong-edge, random brute force") {
  TreeSpec spec;
  spec.seed = 4;
  spec.depth = 2;
  spec.num_classes = 3;
  spec.grid = {40, 40, 40};
  const auto tree = generate_tree(spec);
  auto truth = tree.centerline;
  auto pred = truth;

  auto m = graph_metrics(pred, truth);
  CHECK(m.node_accuracy == 100.0);
  CHECK(m.edge_accuracy == 100.0);
  CHECK(m.node_dice == 100.0);

  // Two-edge graph with one wrong edge -> 50%.
  SkeletonGraph small_truth;
  for (int i = 0; i < 3; ++i) {
    SkeletonNode n;
    n.id = i;
    n.label = 1;
    small_truth.nodes.push_back(n);
  }
  SkeletonEdge e0, e1;
  e0.id = 0; e0.u = 0; e0.v = 1; e0.label = 1;
  e1.id = 1; e1.u = 1; e1.v = 2; e1.label = 2;
  small_truth.edges = {e0, e1};
  auto small_pred = small_truth;
  small_pred.edges[1].label = 1;
  m = graph_metrics(small_pred, small_truth);
  CHECK(m.node_accuracy == 100.0);
  CHECK(m.edge_accuracy == 50.0);

  // Random labelings agree with the direct count.
  Rng rng(6);
  for (auto& n : pred.nodes) n.label = 1 + static_cast<int>(rng.uniform_index(3));
  for (auto& e : pred.edges) e.label = 1 + static_cast<int>(rng.uniform_index(3));
  m = graph_metrics(pred, truth);
  std::size_t node_ok = 0;
  for (std::size_t i = 0; i < pred.nodes.size(); ++i) {
    node_ok += pred.nodes[i].label == truth.nodes[i].label;
  }
  CHECK(m.node_accuracy == doctest::Approx(100.0 * node_ok / pred.nodes.size()));

  auto mismatched = truth;
  mismatched.nodes.pop_back();
  CHECK_THROWS_AS(graph_metrics(mismatched, truth), std::runtime_error);
}

TEST_CASE("dilate_graph_prediction: single node floods, path voxels stay exact, "
          "random tree matches brute force") {
  // Single-node graph takes over the whole foreground.
  LabelVolume vol = LabelVolume::zeros({12, 12, 12}, {1, 1, 1}, 9);
  for (int x = 2; x < 10; ++x) vol.at(x, 5, 5) = 3;
  SkeletonGraph single;
  SkeletonNode n;
  n.id = 0;
  n.voxel = {4, 5, 5};
  n.cluster = {n.voxel};
  n.label = 7;
  single.nodes.push_back(n);
  const auto flooded = dilate_graph_prediction(single, vol);
  for (const auto& [v, label] : foreground_voxels(flooded)) CHECK(label == 7);
  CHECK(foreground_count(flooded) == foreground_count(vol));

  CHECK_THROWS_AS(dilate_graph_prediction(SkeletonGraph{}, vol), std::runtime_error);

  // On a generated tree, compare against an O(V * E) brute-force scan.
  TreeSpec spec;
  spec.seed = 12;
  spec.depth = 3;
  spec.num_classes = 5;
  spec.grid = {48, 48, 48};
  const auto tree = generate_tree(spec);
  auto graph = extract_graph(thin(tree.volume), make_transform(tree.volume));
  recover_labels(graph, tree.volume);

  const auto dilated = dilate_graph_prediction(graph, tree.volume);

  // Voxels on an edge path keep that edge's label (distance 0).
  for (const auto& e : graph.edges) {
    for (const auto& v : e.path) CHECK(int(dilated.at(v)) == e.label);
  }

  struct Candidate {
    Vec3 p;
    int label;
  };
  std::vector<Candidate> candidates;
  for (const auto& node : graph.nodes) {
    for (const auto& v : node.cluster) {
      candidates.push_back({{double(v[0]), double(v[1]), double(v[2])}, node.label});
    }
  }
  for (const auto& e : graph.edges) {
    for (const auto& v : e.path) {
      candidates.push_back({{double(v[0]), double(v[1]), double(v[2])}, e.label});
    }
  }
  for (const auto& [v, label] : foreground_voxels(tree.volume)) {
    double best = std::numeric_limits<double>::infinity();
    int best_label = 0;
    for (const auto& c : candidates) {
      const double d = dist2({double(v[0]), double(v[1]), double(v[2])}, c.p);
      if (d < best) {
        best = d;
        best_label = c.label;
      }
    }
    CHECK(int(dilated.at(v)) == best_label);
  }

  // Ground-truth graph labels dilated back in beat the majority baseline.
  std::vector<int> pred, truth;
  std::map<int, std::size_t> histogram;
  for (const auto& [v, label] : foreground_voxels(tree.volume)) {
    pred.push_back(dilated.at(v));
    truth.push_back(label);
    ++histogram[label];
  }
  std::size_t majority = 0;
  for (const auto& [label, count] : histogram) majority = std::max(majority, count);
  const double baseline = 100.0 * majority / truth.size();
  CHECK(accuracy(pred, truth) > baseline);
}

TEST_CASE("evaluate_volumes produces a coherent report") {
  TreeSpec spec;
  spec.seed = 8;
  spec.depth = 2;
  spec.num_classes = 3;
  spec.grid = {40, 40, 40};
  const auto tree = generate_tree(spec);
  const auto report = evaluate_volumes(tree.volume, tree.volume);
  CHECK(report.point_accuracy == 100.0);
  CHECK(report.micro_dice == 100.0);
  CHECK(report.macro_dice == 100.0);
  CHECK(report.dice_classes == std::vector<int>{1, 2});
  CHECK(report.evaluated_voxels == foreground_count(tree.volume));
  CHECK(!report.to_table().empty());
}
