#pragma once

#include <functional>
#include <string>
#include <vector>

#include "treelabel/autodiff.hpp"

namespace treelabel::nn {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  double tolerance = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Compare analytic gradients against central finite differences in 64-bit
/// mode. `build` constructs the forward graph and returns the scalar loss
/// ref; it must be a pure function of the store. The step is h = 1e-5 *
/// (|w| + 1). For big tensors, `max_entries_per_tensor` > 0 checks a seeded
/// subsample of entries (every tensor is still covered); 0 checks all.
inline GradCheckReport grad_check(
    ParameterStore<double>& store,
    const std::function<Graph<double>::Ref(Graph<double>&)>& build, double tolerance,
    std::size_t max_entries_per_tensor = 0) {
  auto loss_value = [&]() {
    Graph<double> g(&store);
    const auto loss = build(g);
    if (g.value(loss).size() != 1) throw std::runtime_error("grad_check: loss must be scalar");
    return g.value(loss).values[0];
  };

  store.zero_grad();
  {
    Graph<double> g(&store);
    const auto loss = build(g);
    g.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(0x9d5c0ffee);
  for (auto& [name, entry] : store.entries()) {
    if (entry.frozen) continue;
    std::vector<std::size_t> indices;
    const std::size_t n = entry.value.size();
    if (max_entries_per_tensor == 0 || n <= max_entries_per_tensor) {
      for (std::size_t i = 0; i < n; ++i) indices.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_entries_per_tensor; ++i) {
        indices.push_back(rng.uniform_index(n));
      }
    }

    GradCheckEntry row{name, 0.0, indices.size()};
    for (std::size_t i : indices) {
      double& w = entry.value.values[i];
      const double saved = w;
      const double h = 1e-5 * (std::abs(saved) + 1.0);
      w = saved + h;
      const double up = loss_value();
      w = saved - h;
      const double down = loss_value();
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = entry.grad.values[i];
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        throw std::runtime_error("grad_check: non-finite value at " + name);
      }
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      row.max_rel_error = std::max(row.max_rel_error, std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
    report.entries.push_back(std::move(row));
  }
  return report;
}

}  // namespace treelabel::nn
