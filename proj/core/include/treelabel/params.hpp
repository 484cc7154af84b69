#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "treelabel/rng.hpp"
#include "treelabel/tensor.hpp"

namespace treelabel::nn {

/// Named parameter tensors plus optimizer state. Shapes are fixed after
/// creation; names are unique. The map keeps entries in name order, which
/// makes checkpoint blobs and Adam sweeps deterministic.
template <typename Scalar>
class ParameterStore {
 public:
  struct Entry {
    TensorValue<Scalar> value;
    TensorValue<Scalar> grad;
    TensorValue<Scalar> m, v;  // Adam first/second moments
    bool frozen = false;
  };

  TensorValue<Scalar>& create(const std::string& name, std::vector<std::int64_t> shape) {
    auto [it, inserted] = entries_.try_emplace(name);
    if (!inserted) throw std::runtime_error("parameter already exists: " + name);
    it->second.value = TensorValue<Scalar>(shape);
    it->second.grad = TensorValue<Scalar>(shape);
    it->second.m = TensorValue<Scalar>(shape);
    it->second.v = TensorValue<Scalar>(std::move(shape));
    return it->second.value;
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }
  TensorValue<Scalar>& value(const std::string& name) { return entry(name).value; }
  TensorValue<Scalar>& grad(const std::string& name) { return entry(name).grad; }

  void zero_grad() {
    for (auto& [name, e] : entries_) {
      std::fill(e.grad.values.begin(), e.grad.values.end(), Scalar(0));
    }
  }

  /// Mark every parameter whose name starts with `prefix` as frozen: it is
  /// imported into forward graphs as a constant and skipped by the
  /// optimizer.
  void freeze_prefix(const std::string& prefix, bool frozen = true) {
    for (auto& [name, e] : entries_) {
      if (name.rfind(prefix, 0) == 0) e.frozen = frozen;
    }
  }

  /// One standard Adam update over all unfrozen parameters.
  void adam_step(Scalar lr, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                 Scalar eps = Scalar(1e-8)) {
    ++step_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1, Scalar(step_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2, Scalar(step_));
    for (auto& [name, e] : entries_) {
      if (e.frozen) continue;
      for (std::size_t i = 0; i < e.value.values.size(); ++i) {
        const Scalar g = e.grad.values[i];
        e.m.values[i] = beta1 * e.m.values[i] + (Scalar(1) - beta1) * g;
        e.v.values[i] = beta2 * e.v.values[i] + (Scalar(1) - beta2) * g * g;
        const Scalar mhat = e.m.values[i] / bc1;
        const Scalar vhat = e.v.values[i] / bc2;
        e.value.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  std::int64_t adam_steps() const { return step_; }
  void reset_optimizer() {
    step_ = 0;
    for (auto& [name, e] : entries_) {
      std::fill(e.m.values.begin(), e.m.values.end(), Scalar(0));
      std::fill(e.v.values.begin(), e.v.values.end(), Scalar(0));
    }
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
};

/// Glorot-uniform initialization for an affine weight; biases stay zero.
template <typename Scalar>
void init_glorot(TensorValue<Scalar>& w, Rng& rng) {
  if (w.shape.size() != 2) throw std::runtime_error("init_glorot expects a matrix");
  const double fan_in = static_cast<double>(w.shape[0]);
  const double fan_out = static_cast<double>(w.shape[1]);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : w.values) x = static_cast<Scalar>(rng.uniform(-bound, bound));
}

template <typename Scalar>
void init_uniform(TensorValue<Scalar>& w, Rng& rng, double bound) {
  for (auto& x : w.values) x = static_cast<Scalar>(rng.uniform(-bound, bound));
}

}  // namespace treelabel::nn
