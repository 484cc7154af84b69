#include "treelabel/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "treelabel/spatial.hpp"

namespace treelabel {

double accuracy(std::span<const int> pred, std::span<const int> truth,
                const std::set<int>& ignore) {
  if (pred.size() != truth.size()) throw std::runtime_error("accuracy: length mismatch");
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (ignore.count(truth[i])) continue;
    ++total;
    if (pred[i] == truth[i]) ++correct;
  }
  if (total == 0) throw std::runtime_error("accuracy: every entry ignored");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

std::map<int, ClassCounts> confusion(std::span<const int> pred, std::span<const int> truth,
                                     const std::set<int>& classes) {
  if (pred.size() != truth.size()) throw std::runtime_error("dice: length mismatch");
  std::map<int, ClassCounts> counts;
  for (int c : classes) counts[c];
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) {
      if (auto it = counts.find(truth[i]); it != counts.end()) ++it->second.tp;
    } else {
      if (auto it = counts.find(pred[i]); it != counts.end()) ++it->second.fp;
      if (auto it = counts.find(truth[i]); it != counts.end()) ++it->second.fn;
    }
  }
  return counts;
}

}  // namespace

double dice(std::span<const int> pred, std::span<const int> truth, const std::set<int>& classes,
            DiceMode mode) {
  if (classes.empty()) throw std::runtime_error("dice: empty class list");
  const auto counts = confusion(pred, truth, classes);
  if (mode == DiceMode::kMicro) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& [cls, c] : counts) {
      tp += c.tp;
      fp += c.fp;
      fn += c.fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0 ? 100.0 : 100.0 * 2.0 * static_cast<double>(tp) / denom;
  }
  double total = 0;
  std::size_t present = 0;
  for (const auto& [cls, c] : counts) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0) continue;  // class absent from both labelings
    total += 100.0 * 2.0 * static_cast<double>(c.tp) / denom;
    ++present;
  }
  if (present == 0) throw std::runtime_error("dice: no listed class present");
  return total / static_cast<double>(present);
}

std::map<int, double> per_class_dice(std::span<const int> pred, std::span<const int> truth,
                                     const std::set<int>& classes) {
  const auto counts = confusion(pred, truth, classes);
  std::map<int, double> out;
  for (const auto& [cls, c] : counts) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom > 0) out[cls] = 100.0 * 2.0 * static_cast<double>(c.tp) / denom;
  }
  return out;
}

GraphMetrics graph_metrics(const SkeletonGraph& pred, const SkeletonGraph& truth) {
  if (pred.nodes.size() != truth.nodes.size() || pred.edges.size() != truth.edges.size()) {
    throw std::runtime_error("graph_metrics: topology mismatch");
  }
  for (std::size_t i = 0; i < pred.edges.size(); ++i) {
    if (pred.edges[i].u != truth.edges[i].u || pred.edges[i].v != truth.edges[i].v) {
      throw std::runtime_error("graph_metrics: edge endpoints differ");
    }
  }
  std::vector<int> pn, tn, pe, te;
  std::set<int> node_classes, edge_classes;
  for (std::size_t i = 0; i < pred.nodes.size(); ++i) {
    pn.push_back(pred.nodes[i].label);
    tn.push_back(truth.nodes[i].label);
    node_classes.insert(truth.nodes[i].label);
  }
  for (std::size_t i = 0; i < pred.edges.size(); ++i) {
    pe.push_back(pred.edges[i].label);
    te.push_back(truth.edges[i].label);
    edge_classes.insert(truth.edges[i].label);
  }
  GraphMetrics m;
  m.node_accuracy = accuracy(pn, tn);
  m.node_dice = dice(pn, tn, node_classes, DiceMode::kMicro);
  if (!pe.empty()) {
    m.edge_accuracy = accuracy(pe, te);
    m.edge_dice = dice(pe, te, edge_classes, DiceMode::kMicro);
  }
  return m;
}

LabelVolume dilate_graph_prediction(const SkeletonGraph& graph, const LabelVolume& vol) {
  if (graph.nodes.empty()) throw std::runtime_error("dilate_graph_prediction: empty graph");

  // Element candidates in ascending element id: nodes (all cluster voxels)
  // first, then edge path voxels. Insertion order realizes the tie rule.
  std::vector<Vec3> positions;
  std::vector<int> labels;
  for (const auto& n : graph.nodes) {
    for (const auto& v : n.cluster) {
      positions.push_back({double(v[0]), double(v[1]), double(v[2])});
      labels.push_back(n.label);
    }
  }
  // Edges without interior voxels contribute only through their endpoint
  // nodes, which are already present.
  for (const auto& e : graph.edges) {
    for (const auto& v : e.path) {
      positions.push_back({double(v[0]), double(v[1]), double(v[2])});
      labels.push_back(e.label);
    }
  }
  const SpatialIndex index(positions);

  LabelVolume out = LabelVolume::zeros(vol.dims, vol.spacing, vol.num_classes);
  std::size_t i = 0;
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x, ++i) {
        if (vol.data[i] == 0) continue;
        const auto nn = index.knn({double(x), double(y), double(z)}, 1);
        out.data[i] = static_cast<std::uint8_t>(labels[nn[0].id]);
      }
    }
  }
  return out;
}

EvalReport evaluate_volumes(const LabelVolume& pred, const LabelVolume& truth,
                            std::vector<int> dice_classes) {
  if (pred.dims != truth.dims) throw std::runtime_error("evaluate_volumes: dims mismatch");
  std::vector<int> p, t;
  std::set<int> present;
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    if (truth.data[i] == 0 && pred.data[i] == 0) continue;
    p.push_back(pred.data[i]);
    t.push_back(truth.data[i]);
    if (truth.data[i] != 0) present.insert(truth.data[i]);
  }
  EvalReport report;
  if (dice_classes.empty()) {
    for (int c = 1; c < truth.num_classes; ++c) dice_classes.push_back(c);
    if (dice_classes.empty()) dice_classes.push_back(truth.num_classes);
  }
  report.dice_classes = dice_classes;
  report.point_accuracy = accuracy(p, t, {0});
  report.micro_dice = dice(p, t, {dice_classes.begin(), dice_classes.end()}, DiceMode::kMicro);
  report.macro_dice = dice(p, t, present, DiceMode::kMacro);
  report.class_dice = per_class_dice(p, t, present);
  report.evaluated_voxels = t.size();
  return report;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "point accuracy   " << point_accuracy << " %\n";
  os << "micro dice       " << micro_dice << " %  (classes";
  for (int c : dice_classes) os << " " << c;
  os << ")\n";
  os << "macro dice       " << macro_dice << " %\n";
  if (graph) {
    os << "node acc/dice    " << graph->node_accuracy << " / " << graph->node_dice << " %\n";
    os << "edge acc/dice    " << graph->edge_accuracy << " / " << graph->edge_dice << " %\n";
  }
  os << "evaluated voxels " << evaluated_voxels << "\n";
  return os.str();
}

void save_report_json(const EvalReport& report, const std::filesystem::path& path,
                      const std::map<std::string, std::string>& provenance) {
  nlohmann::json j;
  j["point_accuracy"] = report.point_accuracy;
  j["micro_dice"] = report.micro_dice;
  j["macro_dice"] = report.macro_dice;
  j["dice_classes"] = report.dice_classes;
  j["evaluated_voxels"] = report.evaluated_voxels;
  for (const auto& [cls, value] : report.class_dice) {
    j["class_dice"][std::to_string(cls)] = value;
  }
  if (report.graph) {
    j["graph"] = {{"node_accuracy", report.graph->node_accuracy},
                  {"node_dice", report.graph->node_dice},
                  {"edge_accuracy", report.graph->edge_accuracy},
                  {"edge_dice", report.graph->edge_dice}};
  }
  if (!provenance.empty()) {
    for (const auto& [key, value] : provenance) j["provenance"][key] = value;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace treelabel
