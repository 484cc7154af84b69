#pragma once

#include <filesystem>
#include <vector>

#include "treelabel/implicit.hpp"
#include "treelabel/metrics.hpp"

namespace treelabel {

struct VolumeBench {
  std::size_t foreground = 0;
  double implicit_seconds = 0;   // median of runs
  double repeated_seconds = 0;   // median of runs
  double speedup = 0;            // repeated / implicit
  std::int64_t implicit_passes = 0;
  std::int64_t repeated_passes = 0;
  double accuracy_gap = 0;       // |acc(repeated) - acc(implicit)| vs truth, points
  double implicit_accuracy = 0;
  double repeated_accuracy = 0;
};

struct BenchReport {
  std::vector<VolumeBench> volumes;
  double median_speedup = 0;
  int runs_per_volume = 3;
};

/// Wall-clock comparison of the two reconstruction paths on labeled volumes
/// (the labels provide the accuracy comparison; the binary input is derived
/// internally). Preprocessing and all file I/O happen before the timers.
BenchReport bench_reconstruction(const nn::PgnModel<float>& model,
                                 nn::ParameterStore<float>& store,
                                 const std::vector<LabelVolume>& volumes,
                                 const nn::ReconstructOptions& opts, int runs = 3);

void save_bench_json(const BenchReport& report, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& provenance = {});
std::string bench_table(const BenchReport& report);

}  // namespace treelabel
