#include "treelabel/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "treelabel/metrics.hpp"

namespace treelabel {

using nn::Graph;
using nn::GraphAdjacency;
using nn::ParameterStore;
using nn::PgnInstance;

namespace {

constexpr double kPi = 3.14159265358979323846;

bool verbose_log() {
  const char* env = std::getenv("TREELABEL_LOG");
  return env != nullptr && env[0] != '\0' && env[0] != '0';
}

void check_finite(double loss, const char* phase, int epoch, int step) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error(std::string("training diverged: non-finite loss in ") + phase +
                             " phase at epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step));
  }
}

std::vector<int> argmax_labels(const nn::TensorValue<float>& logits) {
  std::vector<int> out(logits.shape[0]);
  const std::int64_t c = logits.shape[1];
  for (std::int64_t r = 0; r < logits.shape[0]; ++r) {
    const float* row = &logits.values[r * c];
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[r] = best;
  }
  return out;
}

/// Sampled, optionally augmented instance of one tree.
PgnInstance make_instance(const TreeSample& tree, int sample_points, Rng& sample_rng,
                          const std::optional<Augmentation>& aug) {
  const auto pick = sample_with_pad(tree.fg_voxels.size(),
                                    static_cast<std::size_t>(sample_points), sample_rng);
  std::vector<Vec3> coords(pick.size());
  std::vector<int> labels(pick.size());
  for (std::size_t i = 0; i < pick.size(); ++i) {
    coords[i] = tree.transform.to_normalized(tree.fg_voxels[pick[i]]);
    labels[i] = tree.fg_labels[pick[i]] - 1;
  }
  PgnInstance inst = PgnInstance::make(std::move(coords), std::move(labels), tree.graph);
  if (aug) {
    augment_in_place(*aug, inst.points);
    augment_in_place(*aug, inst.node_coords);
  }
  return inst;
}

struct ValScores {
  double point = 0, node = 0, edge = 0;
};

}  // namespace

double scheduled_lr(double base, int epoch, int halving_interval) {
  if (halving_interval <= 0) return base;
  return base / std::pow(2.0, epoch / halving_interval);
}

Augmentation sample_augmentation(const TrainConfig& cfg, Rng& rng) {
  Augmentation a;
  a.angle_rad = rng.uniform(-cfg.rotation_range_deg, cfg.rotation_range_deg) * kPi / 180.0;
  for (int i = 0; i < 3; ++i) a.shift[i] = rng.uniform(-cfg.shift_range, cfg.shift_range);
  a.scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1]);
  return a;
}

Vec3 apply_augmentation(const Augmentation& a, const Vec3& p) {
  const double c = std::cos(a.angle_rad), s = std::sin(a.angle_rad);
  const Vec3 rotated{c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]};
  return {rotated[0] * a.scale + a.shift[0], rotated[1] * a.scale + a.shift[1],
          rotated[2] * a.scale + a.shift[2]};
}

void augment_in_place(const Augmentation& a, std::vector<Vec3>& coords) {
  for (auto& p : coords) p = apply_augmentation(a, p);
}

LoadedDataset load_dataset(const DatasetManifest& manifest) {
  LoadedDataset out;
  for (const auto& entry : manifest.trees) {
    TreeSample tree;
    tree.volume = load_volume(manifest.root / entry.volume);
    tree.transform = make_transform(tree.volume);
    for (const auto& [voxel, label] : foreground_voxels(tree.volume)) {
      tree.fg_voxels.push_back(voxel);
      tree.fg_labels.push_back(label);
    }
    tree.graph = load_graph(manifest.root / entry.graph);
    out.num_classes = std::max(out.num_classes, tree.volume.num_classes);
    out.trees.push_back(std::move(tree));
  }
  out.train = manifest.train;
  out.val = manifest.val;
  out.test = manifest.test;
  return out;
}

std::vector<std::size_t> sample_with_pad(std::size_t population, std::size_t count, Rng& rng) {
  if (population == 0) throw std::runtime_error("sample_with_pad: empty population");
  auto perm = rng.permutation(population);
  std::vector<std::size_t> pick(count);
  for (std::size_t i = 0; i < count; ++i) pick[i] = perm[i % population];
  return pick;
}

double majority_class_baseline(const LoadedDataset& dataset, const std::vector<int>& tree_ids) {
  std::map<int, std::size_t> histogram;
  std::size_t total = 0;
  for (int id : tree_ids) {
    for (int label : dataset.trees[id].fg_labels) {
      ++histogram[label];
      ++total;
    }
  }
  std::size_t best = 0;
  for (const auto& [label, count] : histogram) best = std::max(best, count);
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(best) / static_cast<double>(total);
}

void write_training_log(const std::vector<PhaseLogRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path.string());
  out << "epoch,lr,train_loss,val_point_acc,val_node_acc,val_edge_acc\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.val_point_acc << ","
        << r.val_node_acc << "," << r.val_edge_acc << "\n";
  }
}

TrainResult train_encoders(const LoadedDataset& dataset, const nn::EncoderConfig& enc_cfg,
                           const nn::FusionConfig& fus_cfg, const TrainConfig& cfg,
                           ParameterStore<float>& store, const std::filesystem::path& log_dir) {
  const int num_classes = fus_cfg.num_classes;
  const nn::PointEncoder<float> point_enc{"point_enc", enc_cfg};
  const nn::GraphEncoder<float> graph_enc{"graph_enc", enc_cfg};
  const nn::Mlp<float> point_head{"pretrain.point", {enc_cfg.feature_width, num_classes}, false};
  const nn::Mlp<float> node_head{"pretrain.node", {enc_cfg.feature_width, num_classes}, false};
  const nn::Mlp<float> edge_head{"pretrain.edge", {enc_cfg.feature_width, num_classes}, false};

  {
    Rng init_rng = substream(cfg.seed, "init-encoders");
    point_enc.init(store, init_rng);
    graph_enc.init(store, init_rng);
    point_head.init(store, init_rng);
    node_head.init(store, init_rng);
    edge_head.init(store, init_rng);
  }

  TrainResult result;

  // Phase 1a: point encoder on per-point labels.
  std::vector<PhaseLogRow> point_log;
  for (int epoch = 0; epoch < cfg.point_epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.point_lr, epoch, cfg.lr_halving_interval);
    auto order = dataset.train;
    substream(cfg.seed, "point-order", epoch).shuffle(order);
    double loss_sum = 0;
    int step = 0;
    for (int tree_id : order) {
      const auto& tree = dataset.trees[tree_id];
      Rng sample_rng = substream(cfg.seed, "point-sample",
                                 static_cast<std::uint64_t>(epoch) * 1000003 + tree_id);
      std::optional<Augmentation> aug;
      if (cfg.augment) {
        Rng aug_rng = substream(cfg.seed, "point-augment",
                                static_cast<std::uint64_t>(epoch) * 1000003 + tree_id);
        aug = sample_augmentation(cfg, aug_rng);
      }
      const PgnInstance inst = make_instance(tree, cfg.sample_points, sample_rng, aug);

      store.zero_grad();
      Graph<float> g(&store);
      const auto feats = point_enc.forward(g, inst.points);
      const auto loss = g.cross_entropy(point_head.forward(g, feats), inst.point_labels);
      const double loss_value = g.value(loss).values[0];
      check_finite(loss_value, "point-encoder", epoch, step);
      loss_sum += loss_value;
      g.backward(loss);
      store.adam_step(static_cast<float>(lr));
      ++step;
    }

    // Validation: point accuracy on a fixed per-tree sample.
    double val_acc = std::numeric_limits<double>::quiet_NaN();
    if (!dataset.val.empty()) {
      std::size_t correct = 0, total = 0;
      for (int tree_id : dataset.val) {
        Rng sample_rng = substream(cfg.seed, "val-sample", tree_id);
        const PgnInstance inst =
            make_instance(dataset.trees[tree_id], cfg.sample_points, sample_rng, std::nullopt);
        Graph<float> g(&store);
        const auto logits = g.value(point_head.forward(g, point_enc.forward(g, inst.points)));
        const auto pred = argmax_labels(logits);
        for (std::size_t i = 0; i < pred.size(); ++i) {
          if (pred[i] == inst.point_labels[i]) ++correct;
          ++total;
        }
      }
      val_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    }
    point_log.push_back({epoch, lr, loss_sum / std::max(1, static_cast<int>(order.size())),
                         val_acc, std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN()});
    if (verbose_log()) {
      std::cerr << "[point] epoch " << epoch << " lr " << lr << " loss "
                << point_log.back().train_loss << " val " << val_acc << "\n";
    }
  }

  // Phase 1b: graph encoder on node + edge labels.
  store.freeze_prefix("point_enc.");
  store.reset_optimizer();
  std::vector<PhaseLogRow> graph_log;
  for (int epoch = 0; epoch < cfg.graph_epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.graph_lr, epoch, cfg.lr_halving_interval);
    auto order = dataset.train;
    substream(cfg.seed, "graph-order", epoch).shuffle(order);
    double loss_sum = 0;
    int step = 0;
    for (int tree_id : order) {
      const auto& tree = dataset.trees[tree_id];
      PgnInstance inst = PgnInstance::make({{0, 0, 0}}, {}, tree.graph);
      if (cfg.augment) {
        Rng aug_rng = substream(cfg.seed, "graph-augment",
                                static_cast<std::uint64_t>(epoch) * 1000003 + tree_id);
        const Augmentation aug = sample_augmentation(cfg, aug_rng);
        augment_in_place(aug, inst.node_coords);
      }

      store.zero_grad();
      Graph<float> g(&store);
      nn::TensorValue<float> xyz({static_cast<std::int64_t>(inst.node_coords.size()), 3});
      for (std::size_t i = 0; i < inst.node_coords.size(); ++i) {
        for (int a = 0; a < 3; ++a) xyz.values[i * 3 + a] = float(inst.node_coords[i][a]);
      }
      const auto feats = graph_enc.forward(g, g.input(std::move(xyz)), inst.adjacency);
      std::vector<Graph<float>::Ref> terms;
      terms.push_back(g.cross_entropy(node_head.forward(g, feats), inst.node_labels));
      if (!inst.edge_ends.empty()) {
        std::vector<std::int64_t> u_ids, v_ids;
        for (const auto& [u, v] : inst.edge_ends) {
          u_ids.push_back(u);
          v_ids.push_back(v);
        }
        const auto mean = g.scale(
            g.add(g.gather_rows(feats, std::move(u_ids)), g.gather_rows(feats, std::move(v_ids))),
            0.5f);
        terms.push_back(g.cross_entropy(edge_head.forward(g, mean), inst.edge_labels));
      }
      const auto loss = g.sum_scalars(terms);
      const double loss_value = g.value(loss).values[0];
      check_finite(loss_value, "graph-encoder", epoch, step);
      loss_sum += loss_value;
      g.backward(loss);
      store.adam_step(static_cast<float>(lr));
      ++step;
    }

    double val_node = std::numeric_limits<double>::quiet_NaN();
    double val_edge = std::numeric_limits<double>::quiet_NaN();
    if (!dataset.val.empty()) {
      std::size_t node_correct = 0, node_total = 0, edge_correct = 0, edge_total = 0;
      for (int tree_id : dataset.val) {
        const auto& tree = dataset.trees[tree_id];
        const PgnInstance inst = PgnInstance::make({{0, 0, 0}}, {}, tree.graph);
        Graph<float> g(&store);
        nn::TensorValue<float> xyz({static_cast<std::int64_t>(inst.node_coords.size()), 3});
        for (std::size_t i = 0; i < inst.node_coords.size(); ++i) {
          for (int a = 0; a < 3; ++a) xyz.values[i * 3 + a] = float(inst.node_coords[i][a]);
        }
        const auto feats = graph_enc.forward(g, g.input(std::move(xyz)), inst.adjacency);
        const auto node_pred = argmax_labels(g.value(node_head.forward(g, feats)));
        for (std::size_t i = 0; i < node_pred.size(); ++i) {
          if (node_pred[i] == inst.node_labels[i]) ++node_correct;
          ++node_total;
        }
        if (!inst.edge_ends.empty()) {
          std::vector<std::int64_t> u_ids, v_ids;
          for (const auto& [u, v] : inst.edge_ends) {
            u_ids.push_back(u);
            v_ids.push_back(v);
          }
          const auto mean = g.scale(g.add(g.gather_rows(feats, std::move(u_ids)),
                                          g.gather_rows(feats, std::move(v_ids))),
                                    0.5f);
          const auto edge_pred = argmax_labels(g.value(edge_head.forward(g, mean)));
          for (std::size_t i = 0; i < edge_pred.size(); ++i) {
            if (edge_pred[i] == inst.edge_labels[i]) ++edge_correct;
            ++edge_total;
          }
        }
      }
      val_node = 100.0 * static_cast<double>(node_correct) / std::max<std::size_t>(1, node_total);
      val_edge = 100.0 * static_cast<double>(edge_correct) / std::max<std::size_t>(1, edge_total);
    }
    graph_log.push_back({epoch, lr, loss_sum / std::max(1, static_cast<int>(order.size())),
                         std::numeric_limits<double>::quiet_NaN(), val_node, val_edge});
    if (verbose_log()) {
      std::cerr << "[graph] epoch " << epoch << " lr " << lr << " loss "
                << graph_log.back().train_loss << " val node " << val_node << " edge " << val_edge
                << "\n";
    }
  }

  // Heads are scaffolding; the deliverable is the frozen encoders.
  for (const char* prefix : {"pretrain.point", "pretrain.node", "pretrain.edge"}) {
    std::vector<std::string> doomed;
    for (const auto& [name, e] : store.entries()) {
      if (name.rfind(prefix, 0) == 0) doomed.push_back(name);
    }
    for (const auto& name : doomed) store.entries().erase(name);
  }
  store.freeze_prefix("graph_enc.");
  store.reset_optimizer();

  if (!point_log.empty()) result.best_val_point_acc = point_log.back().val_point_acc;
  if (!graph_log.empty()) {
    result.best_val_node_acc = graph_log.back().val_node_acc;
    result.best_val_edge_acc = graph_log.back().val_edge_acc;
  }
  result.log = point_log;
  result.log.insert(result.log.end(), graph_log.begin(), graph_log.end());
  if (!log_dir.empty()) {
    std::filesystem::create_directories(log_dir);
    write_training_log(point_log, log_dir / "train_point.csv");
    write_training_log(graph_log, log_dir / "train_graph.csv");
  }
  return result;
}

TrainResult train_ipgn(const LoadedDataset& dataset, const nn::PgnModel<float>& model,
                       const TrainConfig& cfg, ParameterStore<float>& store,
                       const std::filesystem::path& log_dir) {
  {
    Rng init_rng = substream(cfg.seed, "init-fusion");
    model.init_fusion(store, init_rng);
  }
  const auto implicit_head = model.implicit_head();
  const auto stage_mask = model.stage_mask();

  TrainResult result;
  std::map<std::string, nn::ParameterStore<float>::Entry> best_entries;
  std::vector<PhaseLogRow> log;

  auto evaluate_val = [&]() {
    ValScores scores;
    std::size_t pc = 0, pt = 0, nc = 0, nt = 0, ec = 0, et = 0;
    for (int tree_id : dataset.val) {
      Rng sample_rng = substream(cfg.seed, "val-sample", tree_id);
      const PgnInstance inst =
          make_instance(dataset.trees[tree_id], cfg.sample_points, sample_rng, std::nullopt);
      Graph<float> g(&store);
      const auto out = model.forward(g, inst);
      const auto point_pred = argmax_labels(g.value(out.point_logits));
      for (std::size_t i = 0; i < point_pred.size(); ++i) {
        if (point_pred[i] == inst.point_labels[i]) ++pc;
        ++pt;
      }
      const auto node_pred = argmax_labels(g.value(out.node_logits));
      for (std::size_t i = 0; i < node_pred.size(); ++i) {
        if (node_pred[i] == inst.node_labels[i]) ++nc;
        ++nt;
      }
      if (out.edge_logits >= 0) {
        const auto edge_pred = argmax_labels(g.value(out.edge_logits));
        for (std::size_t i = 0; i < edge_pred.size(); ++i) {
          if (edge_pred[i] == inst.edge_labels[i]) ++ec;
          ++et;
        }
      }
    }
    scores.point = pt ? 100.0 * pc / pt : 0.0;
    scores.node = nt ? 100.0 * nc / nt : 0.0;
    scores.edge = et ? 100.0 * ec / et : 0.0;
    return scores;
  };

  for (int epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.joint_lr, epoch, cfg.lr_halving_interval);
    auto order = dataset.train;
    substream(cfg.seed, "joint-order", epoch).shuffle(order);
    double loss_sum = 0;
    int step = 0;
    for (int tree_id : order) {
      const auto& tree = dataset.trees[tree_id];
      const std::uint64_t tag = static_cast<std::uint64_t>(epoch) * 1000003 + tree_id;
      Rng sample_rng = substream(cfg.seed, "joint-sample", tag);
      std::optional<Augmentation> aug;
      if (cfg.augment) {
        Rng aug_rng = substream(cfg.seed, "joint-augment", tag);
        aug = sample_augmentation(cfg, aug_rng);
      }
      const PgnInstance inst = make_instance(tree, cfg.sample_points, sample_rng, aug);

      store.zero_grad();
      Graph<float> g(&store);
      const auto out = model.forward(g, inst);
      std::vector<Graph<float>::Ref> terms;
      terms.push_back(g.cross_entropy(out.point_logits, inst.point_labels));
      terms.push_back(g.cross_entropy(out.node_logits, inst.node_labels));
      if (out.edge_logits >= 0) {
        terms.push_back(g.cross_entropy(out.edge_logits, inst.edge_labels));
      }

      // Fresh M' foreground points through the implicit head.
      if (cfg.implicit_points > 0) {
        Rng implicit_rng = substream(cfg.seed, "implicit-sample", tag);
        const auto pick = sample_with_pad(tree.fg_voxels.size(),
                                          static_cast<std::size_t>(cfg.implicit_points),
                                          implicit_rng);
        std::vector<Vec3> queries(pick.size());
        std::vector<int> qlabels(pick.size());
        for (std::size_t i = 0; i < pick.size(); ++i) {
          Vec3 q = tree.transform.to_normalized(tree.fg_voxels[pick[i]]);
          queries[i] = aug ? apply_augmentation(*aug, q) : q;
          qlabels[i] = tree.fg_labels[pick[i]] - 1;
        }
        const SpatialIndex point_index(inst.points);
        const std::int64_t k = std::min<std::int64_t>(model.fusion_config().propagation_k,
                                                      static_cast<std::int64_t>(inst.points.size()));
        std::vector<std::int64_t> idx;
        std::vector<float> weights;
        std::vector<double> dists(k);
        for (const auto& q : queries) {
          const auto nn_list = point_index.knn(q, static_cast<std::size_t>(k));
          for (std::int64_t j = 0; j < k; ++j) dists[j] = nn_list[j].distance;
          const auto w = idw_weights(dists);
          for (std::int64_t j = 0; j < k; ++j) {
            idx.push_back(static_cast<std::int64_t>(nn_list[j].id));
            weights.push_back(static_cast<float>(w[j]));
          }
        }
        const auto cache = model.stage_concat(g, out.point_stages, stage_mask);
        const auto z = g.idw_gather(cache, std::move(idx), std::move(weights), k);
        terms.push_back(g.cross_entropy(implicit_head.forward(g, z), qlabels));
      }

      const auto loss = g.sum_scalars(terms);
      const double loss_value = g.value(loss).values[0];
      check_finite(loss_value, "joint", epoch, step);
      loss_sum += loss_value;
      g.backward(loss);
      store.adam_step(static_cast<float>(lr));
      ++step;
    }

    ValScores scores{};
    if (!dataset.val.empty()) scores = evaluate_val();
    log.push_back({epoch, lr, loss_sum / std::max(1, static_cast<int>(order.size())),
                   scores.point, scores.node, scores.edge});
    if (verbose_log()) {
      std::cerr << "[joint] epoch " << epoch << " lr " << lr << " loss "
                << log.back().train_loss << " val point " << scores.point << " node "
                << scores.node << " edge " << scores.edge << "\n";
    }
    if (dataset.val.empty() || scores.point > result.best_val_point_acc ||
        result.best_epoch < 0) {
      result.best_val_point_acc = scores.point;
      result.best_val_node_acc = scores.node;
      result.best_val_edge_acc = scores.edge;
      result.best_epoch = epoch;
      best_entries = store.entries();
    }
  }

  if (!best_entries.empty()) store.entries() = std::move(best_entries);
  result.log = log;
  if (!log_dir.empty()) {
    std::filesystem::create_directories(log_dir);
    write_training_log(log, log_dir / "train_joint.csv");
  }
  return result;
}

}  // namespace treelabel
