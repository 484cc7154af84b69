#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace treelabel::nn {

/// Dense row-major tensor of rank 0..2 (scalars, vectors, matrices cover
/// everything the network needs). Scalar is float for training/inference
/// and double for gradient checking.
template <typename Scalar>
struct TensorValue {
  std::vector<std::int64_t> shape;
  std::vector<Scalar> values;

  TensorValue() = default;
  TensorValue(std::vector<std::int64_t> s, Scalar fill = Scalar(0)) : shape(std::move(s)) {
    values.assign(static_cast<std::size_t>(element_count(shape)), fill);
  }

  static std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d <= 0) throw std::runtime_error("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }

  std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::int64_t cols() const {
    if (shape.size() < 2) return shape.empty() ? 1 : 1;
    return shape[1];
  }
  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1 && shape.empty(); }

  Scalar& operator()(std::int64_t r, std::int64_t c) {
    return values[static_cast<std::size_t>(r * cols() + c)];
  }
  Scalar operator()(std::int64_t r, std::int64_t c) const {
    return values[static_cast<std::size_t>(r * cols() + c)];
  }

  static TensorValue scalar(Scalar v) {
    TensorValue t;
    t.values = {v};
    return t;
  }

  template <typename Other>
  TensorValue<Other> cast() const {
    TensorValue<Other> out;
    out.shape = shape;
    out.values.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.values[i] = static_cast<Other>(values[i]);
    }
    return out;
  }
};

}  // namespace treelabel::nn
