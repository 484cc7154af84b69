#include "treelabel/encoders.hpp"

#include <limits>
#include <stdexcept>

namespace treelabel::nn {

std::vector<std::int64_t> farthest_point_sample(const std::vector<Vec3>& coords,
                                                std::int64_t count) {
  if (count < 1 || count > static_cast<std::int64_t>(coords.size())) {
    throw std::runtime_error("farthest_point_sample: bad centroid count");
  }
  std::vector<std::int64_t> picked;
  picked.reserve(static_cast<std::size_t>(count));
  std::vector<double> min_d2(coords.size(), std::numeric_limits<double>::infinity());

  std::int64_t current = 0;  // deterministic start at the smallest id
  picked.push_back(current);
  for (std::int64_t i = 1; i < count; ++i) {
    std::int64_t best = -1;
    double best_d2 = -1.0;
    for (std::size_t j = 0; j < coords.size(); ++j) {
      const double d2v = dist2(coords[j], coords[current]);
      if (d2v < min_d2[j]) min_d2[j] = d2v;
      if (min_d2[j] > best_d2) {  // strict '>' keeps the smaller id on ties
        best_d2 = min_d2[j];
        best = static_cast<std::int64_t>(j);
      }
    }
    picked.push_back(best);
    current = best;
  }
  return picked;
}

}  // namespace treelabel::nn
