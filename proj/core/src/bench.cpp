#include "treelabel/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace treelabel {

namespace {

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::vector<int> foreground_labels(const LabelVolume& vol,
                                   const std::vector<Voxel>& voxels) {
  std::vector<int> out(voxels.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) out[i] = vol.at(voxels[i]);
  return out;
}

}  // namespace

BenchReport bench_reconstruction(const nn::PgnModel<float>& model,
                                 nn::ParameterStore<float>& store,
                                 const std::vector<LabelVolume>& volumes,
                                 const nn::ReconstructOptions& opts, int runs) {
  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.runs_per_volume = runs;
  std::vector<double> speedups;

  for (const auto& truth : volumes) {
    const auto ctx = nn::build_reconstruction_context(truth);
    VolumeBench row;
    row.foreground = ctx.foreground.size();

    std::vector<double> implicit_times, repeated_times;
    LabelVolume implicit_out, repeated_out;
    for (int r = 0; r < runs; ++r) {
      model.reset_backbone_counter();
      const auto t0 = clock::now();
      implicit_out = nn::reconstruct_dense(ctx, model, store, opts);
      const auto t1 = clock::now();
      implicit_times.push_back(std::chrono::duration<double>(t1 - t0).count());
      row.implicit_passes = model.backbone_passes();

      model.reset_backbone_counter();
      const auto t2 = clock::now();
      repeated_out = nn::repeated_inference_reconstruct(ctx, model, store, opts);
      const auto t3 = clock::now();
      repeated_times.push_back(std::chrono::duration<double>(t3 - t2).count());
      row.repeated_passes = model.backbone_passes();
    }
    row.implicit_seconds = median(implicit_times);
    row.repeated_seconds = median(repeated_times);
    row.speedup = row.repeated_seconds / row.implicit_seconds;

    const auto truth_labels = foreground_labels(truth, ctx.foreground);
    const auto implicit_labels = foreground_labels(implicit_out, ctx.foreground);
    const auto repeated_labels = foreground_labels(repeated_out, ctx.foreground);
    row.implicit_accuracy = accuracy(implicit_labels, truth_labels);
    row.repeated_accuracy = accuracy(repeated_labels, truth_labels);
    row.accuracy_gap = std::abs(row.implicit_accuracy - row.repeated_accuracy);

    speedups.push_back(row.speedup);
    report.volumes.push_back(row);
  }
  report.median_speedup = median(speedups);
  return report;
}

std::string bench_table(const BenchReport& report) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "foreground  implicit(s)  repeated(s)  speedup  passes(imp/rep)  acc imp/rep (%)\n";
  for (const auto& v : report.volumes) {
    os << v.foreground << "  " << v.implicit_seconds << "  " << v.repeated_seconds << "  "
       << v.speedup << "  " << v.implicit_passes << "/" << v.repeated_passes << "  ";
    os.precision(2);
    os << v.implicit_accuracy << "/" << v.repeated_accuracy << "\n";
    os.precision(3);
  }
  os << "median speedup: " << report.median_speedup << " (" << report.runs_per_volume
     << " runs per volume)\n";
  return os.str();
}

void save_bench_json(const BenchReport& report, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& provenance) {
  nlohmann::json j;
  j["median_speedup"] = report.median_speedup;
  j["runs_per_volume"] = report.runs_per_volume;
  j["volumes"] = nlohmann::json::array();
  for (const auto& v : report.volumes) {
    j["volumes"].push_back({{"foreground", v.foreground},
                            {"implicit_seconds", v.implicit_seconds},
                            {"repeated_seconds", v.repeated_seconds},
                            {"speedup", v.speedup},
                            {"implicit_passes", v.implicit_passes},
                            {"repeated_passes", v.repeated_passes},
                            {"implicit_accuracy", v.implicit_accuracy},
                            {"repeated_accuracy", v.repeated_accuracy},
                            {"accuracy_gap", v.accuracy_gap}});
  }
  for (const auto& [key, value] : provenance) j["provenance"][key] = value;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bench report " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace treelabel
