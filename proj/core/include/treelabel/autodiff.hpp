#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "treelabel/params.hpp"
#include "treelabel/tensor.hpp"

namespace treelabel::nn {

/// Reverse-mode tape over dense tensors. Ops evaluate eagerly; backward()
/// replays the tape in reverse and accumulates parameter gradients into the
/// owning ParameterStore. One Graph instance per forward pass; it is not
/// thread-safe, but independent graphs over a frozen store may run
/// concurrently.
template <typename Scalar>
class Graph {
 public:
  using Ref = std::int32_t;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  explicit Graph(ParameterStore<Scalar>* store = nullptr) : store_(store) {}

  ParameterStore<Scalar>* store() { return store_; }

  // ---- leaves ----

  Ref input(TensorValue<Scalar> value) { return push(std::move(value), {}, nullptr); }

  Ref scalar_input(Scalar v) { return input(TensorValue<Scalar>::scalar(v)); }

  /// Import a named parameter. Frozen parameters come in as constants.
  Ref param(const std::string& name) {
    auto& e = store_->entry(name);
    if (e.frozen) return push(e.value, {}, nullptr);
    TensorValue<Scalar>* grad_sink = &e.grad;
    const Ref id = push(e.value, {}, nullptr);
    nodes_[id].backward = [this, id, grad_sink]() {
      const auto& g = grad(id).values;
      for (std::size_t i = 0; i < g.size(); ++i) grad_sink->values[i] += g[i];
    };
    return id;
  }

  // ---- accessors ----

  const TensorValue<Scalar>& value(Ref id) const { return nodes_[id].value; }
  TensorValue<Scalar>& grad(Ref id) { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  ConstMatMap mat(Ref id) const {
    const auto& t = nodes_[id].value;
    return ConstMatMap(t.values.data(), t.rows(), t.cols());
  }

  // ---- ops ----

  /// C = A * B for A: N x K, B: K x M.
  Ref matmul(Ref a, Ref b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require(av.shape.size() == 2 && bv.shape.size() == 2 && av.shape[1] == bv.shape[0],
            "matmul shape mismatch");
    TensorValue<Scalar> out({av.shape[0], bv.shape[1]});
    MatMap(out.values.data(), out.rows(), out.cols()).noalias() = mat(a) * mat(b);
    const Ref id = push(std::move(out), {a, b}, nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      const auto& g = grad(id);
      ConstMatMap gm(g.values.data(), g.rows(), g.cols());
      MatMap(grad(a).values.data(), grad(a).rows(), grad(a).cols()).noalias() +=
          gm * mat(b).transpose();
      MatMap(grad(b).values.data(), grad(b).rows(), grad(b).cols()).noalias() +=
          mat(a).transpose() * gm;
    };
    return id;
  }

  /// Row-wise bias add: x (N x D) + b (D).
  Ref add_bias(Ref x, Ref b) {
    const auto& xv = value(x);
    const auto& bv = value(b);
    require(xv.shape.size() == 2 && bv.size() == static_cast<std::size_t>(xv.shape[1]),
            "add_bias shape mismatch");
    TensorValue<Scalar> out = xv;
    const std::int64_t d = xv.shape[1];
    for (std::int64_t r = 0; r < xv.shape[0]; ++r) {
      for (std::int64_t c = 0; c < d; ++c) out.values[r * d + c] += bv.values[c];
    }
    const Ref id = push(std::move(out), {x, b}, nullptr);
    nodes_[id].backward = [this, id, x, b, d]() {
      const auto& g = grad(id).values;
      auto& gx = grad(x).values;
      auto& gb = grad(b).values;
      const std::int64_t rows = value(x).shape[0];
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < d; ++c) {
          gx[r * d + c] += g[r * d + c];
          gb[c] += g[r * d + c];
        }
      }
    };
    return id;
  }

  Ref add(Ref a, Ref b) {
    const auto& av = value(a);
    require(av.shape == value(b).shape, "add shape mismatch");
    TensorValue<Scalar> out = av;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += value(b).values[i];
    const Ref id = push(std::move(out), {a, b}, nullptr);
    nodes_[id].backward = [this, id, a, b]() {
      const auto& g = grad(id).values;
      for (std::size_t i = 0; i < g.size(); ++i) {
        grad(a).values[i] += g[i];
        grad(b).values[i] += g[i];
      }
    };
    return id;
  }

  Ref scale(Ref a, Scalar c) {
    TensorValue<Scalar> out = value(a);
    for (auto& v : out.values) v *= c;
    const Ref id = push(std::move(out), {a}, nullptr);
    nodes_[id].backward = [this, id, a, c]() {
      const auto& g = grad(id).values;
      for (std::size_t i = 0; i < g.size(); ++i) grad(a).values[i] += c * g[i];
    };
    return id;
  }

  Ref relu(Ref a) { return leaky_relu(a, Scalar(0)); }

  Ref leaky_relu(Ref a, Scalar slope) {
    TensorValue<Scalar> out = value(a);
    for (auto& v : out.values) {
      if (v < Scalar(0)) v *= slope;
    }
    const Ref id = push(std::move(out), {a}, nullptr);
    nodes_[id].backward = [this, id, a, slope]() {
      const auto& g = grad(id).values;
      const auto& x = value(a).values;
      auto& gx = grad(a).values;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += (x[i] > Scalar(0) ? Scalar(1) : slope) * g[i];
      }
    };
    return id;
  }

  /// [a | b] along columns.
  Ref concat_cols(Ref a, Ref b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require(av.shape.size() == 2 && bv.shape.size() == 2 && av.shape[0] == bv.shape[0],
            "concat_cols shape mismatch");
    const std::int64_t rows = av.shape[0], da = av.shape[1], db = bv.shape[1];
    TensorValue<Scalar> out({rows, da + db});
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < da; ++c) out.values[r * (da + db) + c] = av.values[r * da + c];
      for (std::int64_t c = 0; c < db; ++c) {
        out.values[r * (da + db) + da + c] = bv.values[r * db + c];
      }
    }
    const Ref id = push(std::move(out), {a, b}, nullptr);
    nodes_[id].backward = [this, id, a, b, rows, da, db]() {
      const auto& g = grad(id).values;
      auto& ga = grad(a).values;
      auto& gb = grad(b).values;
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < da; ++c) ga[r * da + c] += g[r * (da + db) + c];
        for (std::int64_t c = 0; c < db; ++c) gb[r * db + c] += g[r * (da + db) + da + c];
      }
    };
    return id;
  }

  /// out[i, :] = x[idx[i], :].
  Ref gather_rows(Ref x, std::vector<std::int64_t> idx) {
    const auto& xv = value(x);
    require(xv.shape.size() == 2, "gather_rows expects a matrix");
    const std::int64_t d = xv.shape[1];
    TensorValue<Scalar> out({static_cast<std::int64_t>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && idx[i] < xv.shape[0], "gather_rows index out of range");
      std::copy_n(&xv.values[idx[i] * d], d, &out.values[i * d]);
    }
    auto idx_ptr = std::make_shared<const std::vector<std::int64_t>>(std::move(idx));
    const Ref id = push(std::move(out), {x}, nullptr);
    nodes_[id].backward = [this, id, x, idx_ptr, d]() {
      const auto& g = grad(id).values;
      auto& gx = grad(x).values;
      for (std::size_t i = 0; i < idx_ptr->size(); ++i) {
        const std::int64_t base = (*idx_ptr)[i] * d;
        for (std::int64_t c = 0; c < d; ++c) gx[base + c] += g[i * d + c];
      }
    };
    return id;
  }

  /// Column-wise max over row segments. offsets has S+1 entries; every
  /// segment must be non-empty. Gradient flows to the first maximizing row.
  Ref segment_max(Ref x, std::vector<std::int64_t> offsets) {
    const auto& xv = value(x);
    require(xv.shape.size() == 2 && offsets.size() >= 2, "segment_max shape mismatch");
    const std::int64_t d = xv.shape[1];
    const std::int64_t segments = static_cast<std::int64_t>(offsets.size()) - 1;
    require(offsets.back() == xv.shape[0], "segment_max offsets must cover all rows");
    TensorValue<Scalar> out({segments, d});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(segments * d);
    for (std::int64_t s = 0; s < segments; ++s) {
      require(offsets[s] < offsets[s + 1], "segment_max: empty segment");
      for (std::int64_t c = 0; c < d; ++c) {
        std::int64_t best = offsets[s];
        Scalar best_v = xv.values[best * d + c];
        for (std::int64_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
          if (xv.values[r * d + c] > best_v) {
            best_v = xv.values[r * d + c];
            best = r;
          }
        }
        out.values[s * d + c] = best_v;
        (*argmax)[s * d + c] = best;
      }
    }
    const Ref id = push(std::move(out), {x}, nullptr);
    nodes_[id].backward = [this, id, x, argmax, d]() {
      const auto& g = grad(id).values;
      auto& gx = grad(x).values;
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[(*argmax)[i] * d + (i % d)] += g[i];
      }
    };
    return id;
  }

  /// Softmax within each row segment, independently per column.
  Ref segment_softmax(Ref x, std::vector<std::int64_t> offsets) {
    const auto& xv = value(x);
    require(xv.shape.size() == 2, "segment_softmax expects a matrix");
    const std::int64_t d = xv.shape[1];
    require(!offsets.empty() && offsets.back() == xv.shape[0],
            "segment_softmax offsets must cover all rows");
    TensorValue<Scalar> out = xv;
    const std::int64_t segments = static_cast<std::int64_t>(offsets.size()) - 1;
    for (std::int64_t s = 0; s < segments; ++s) {
      require(offsets[s] < offsets[s + 1], "segment_softmax: empty segment");
      for (std::int64_t c = 0; c < d; ++c) {
        Scalar m = xv.values[offsets[s] * d + c];
        for (std::int64_t r = offsets[s]; r < offsets[s + 1]; ++r) {
          m = std::max(m, xv.values[r * d + c]);
        }
        Scalar total = Scalar(0);
        for (std::int64_t r = offsets[s]; r < offsets[s + 1]; ++r) {
          const Scalar e = std::exp(xv.values[r * d + c] - m);
          out.values[r * d + c] = e;
          total += e;
        }
        for (std::int64_t r = offsets[s]; r < offsets[s + 1]; ++r) {
          out.values[r * d + c] /= total;
        }
      }
    }
    auto offsets_ptr = std::make_shared<const std::vector<std::int64_t>>(std::move(offsets));
    const Ref id = push(std::move(out), {x}, nullptr);
    nodes_[id].backward = [this, id, x, offsets_ptr, d]() {
      const auto& y = value(id).values;
      const auto& g = grad(id).values;
      auto& gx = grad(x).values;
      const auto& off = *offsets_ptr;
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        for (std::int64_t c = 0; c < d; ++c) {
          Scalar dot = Scalar(0);
          for (std::int64_t r = off[s]; r < off[s + 1]; ++r) dot += y[r * d + c] * g[r * d + c];
          for (std::int64_t r = off[s]; r < off[s + 1]; ++r) {
            gx[r * d + c] += y[r * d + c] * (g[r * d + c] - dot);
          }
        }
      }
    };
    return id;
  }

  /// Attention aggregation: for segment s (rows of `alpha` grouped by
  /// offsets) and head h over column block [h*hd, (h+1)*hd):
  ///   out[s, h*hd+c] = sum_{r in seg s} alpha[r, h] * feats[src[r], h*hd+c].
  Ref segment_attend(Ref alpha, Ref feats, std::vector<std::int64_t> src,
                     std::vector<std::int64_t> offsets, std::int64_t heads) {
    const auto& av = value(alpha);
    const auto& fv = value(feats);
    require(av.shape.size() == 2 && av.shape[1] == heads, "segment_attend: alpha must be R x heads");
    require(fv.shape.size() == 2 && fv.shape[1] % heads == 0,
            "segment_attend: feature width must divide by heads");
    require(static_cast<std::int64_t>(src.size()) == av.shape[0] && offsets.back() == av.shape[0],
            "segment_attend: src/offsets mismatch");
    const std::int64_t hd = fv.shape[1] / heads;
    const std::int64_t segments = static_cast<std::int64_t>(offsets.size()) - 1;
    const std::int64_t width = fv.shape[1];
    TensorValue<Scalar> out({segments, width});
    for (std::int64_t s = 0; s < segments; ++s) {
      for (std::int64_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        const Scalar* frow = &fv.values[src[r] * width];
        for (std::int64_t h = 0; h < heads; ++h) {
          const Scalar a = av.values[r * heads + h];
          Scalar* orow = &out.values[s * width + h * hd];
          for (std::int64_t c = 0; c < hd; ++c) orow[c] += a * frow[h * hd + c];
        }
      }
    }
    auto src_ptr = std::make_shared<const std::vector<std::int64_t>>(std::move(src));
    auto off_ptr = std::make_shared<const std::vector<std::int64_t>>(std::move(offsets));
    const Ref id = push(std::move(out), {alpha, feats}, nullptr);
    nodes_[id].backward = [this, id, alpha, feats, src_ptr, off_ptr, heads, hd, width]() {
      const auto& g = grad(id).values;
      const auto& av2 = value(alpha).values;
      const auto& fv2 = value(feats).values;
      auto& ga = grad(alpha).values;
      auto& gf = grad(feats).values;
      const auto& off = *off_ptr;
      const auto& src2 = *src_ptr;
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        const Scalar* grow = &g[s * width];
        for (std::int64_t r = off[s]; r < off[s + 1]; ++r) {
          const std::int64_t base = src2[r] * width;
          for (std::int64_t h = 0; h < heads; ++h) {
            Scalar dot = Scalar(0);
            for (std::int64_t c = 0; c < hd; ++c) {
              dot += grow[h * hd + c] * fv2[base + h * hd + c];
              gf[base + h * hd + c] += av2[r * heads + h] * grow[h * hd + c];
            }
            ga[r * heads + h] += dot;
          }
        }
      }
    };
    return id;
  }

  /// Per-head inner product with a shared vector: out[n, h] =
  /// sum_{c in head h} x[n, c] * a[c].
  Ref head_dot(Ref x, Ref a, std::int64_t heads) {
    const auto& xv = value(x);
    const auto& av = value(a);
    require(xv.shape.size() == 2 && xv.shape[1] % heads == 0, "head_dot width/heads mismatch");
    require(av.size() == static_cast<std::size_t>(xv.shape[1]), "head_dot vector mismatch");
    const std::int64_t hd = xv.shape[1] / heads;
    const std::int64_t rows = xv.shape[0];
    TensorValue<Scalar> out({rows, heads});
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t h = 0; h < heads; ++h) {
        Scalar dot = Scalar(0);
        for (std::int64_t c = 0; c < hd; ++c) {
          dot += xv.values[r * xv.shape[1] + h * hd + c] * av.values[h * hd + c];
        }
        out.values[r * heads + h] = dot;
      }
    }
    const Ref id = push(std::move(out), {x, a}, nullptr);
    nodes_[id].backward = [this, id, x, a, heads, hd]() {
      const auto& g = grad(id).values;
      const auto& xv2 = value(x).values;
      const auto& av2 = value(a).values;
      auto& gx = grad(x).values;
      auto& ga = grad(a).values;
      const std::int64_t width = heads * hd;
      const std::int64_t rows = value(x).shape[0];
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t h = 0; h < heads; ++h) {
          const Scalar gh = g[r * heads + h];
          for (std::int64_t c = 0; c < hd; ++c) {
            gx[r * width + h * hd + c] += gh * av2[h * hd + c];
            ga[h * hd + c] += gh * xv2[r * width + h * hd + c];
          }
        }
      }
    };
    return id;
  }

  /// Weighted gather: out[q, :] = sum_j weights[q*k+j] * x[idx[q*k+j], :].
  /// The weights are constants (inverse-distance coefficients).
  Ref idw_gather(Ref x, std::vector<std::int64_t> idx, std::vector<Scalar> weights,
                 std::int64_t k) {
    const auto& xv = value(x);
    require(xv.shape.size() == 2 && idx.size() == weights.size() && k >= 1 &&
                idx.size() % static_cast<std::size_t>(k) == 0,
            "idw_gather shape mismatch");
    const std::int64_t d = xv.shape[1];
    const std::int64_t q = static_cast<std::int64_t>(idx.size()) / k;
    TensorValue<Scalar> out({q, d});
    for (std::int64_t i = 0; i < q; ++i) {
      for (std::int64_t j = 0; j < k; ++j) {
        const Scalar w = weights[i * k + j];
        const Scalar* row = &xv.values[idx[i * k + j] * d];
        for (std::int64_t c = 0; c < d; ++c) out.values[i * d + c] += w * row[c];
      }
    }
    auto idx_ptr = std::make_shared<const std::vector<std::int64_t>>(std::move(idx));
    auto w_ptr = std::make_shared<const std::vector<Scalar>>(std::move(weights));
    const Ref id = push(std::move(out), {x}, nullptr);
    nodes_[id].backward = [this, id, x, idx_ptr, w_ptr, k, d]() {
      const auto& g = grad(id).values;
      auto& gx = grad(x).values;
      const std::int64_t q2 = static_cast<std::int64_t>(idx_ptr->size()) / k;
      for (std::int64_t i = 0; i < q2; ++i) {
        for (std::int64_t j = 0; j < k; ++j) {
          const Scalar w = (*w_ptr)[i * k + j];
          const std::int64_t base = (*idx_ptr)[i * k + j] * d;
          for (std::int64_t c = 0; c < d; ++c) gx[base + c] += w * g[i * d + c];
        }
      }
    };
    return id;
  }

  /// Mean negative log softmax probability of the true class.
  Ref cross_entropy(Ref logits, std::vector<int> labels) {
    const auto& lv = value(logits);
    require(lv.shape.size() == 2 && lv.shape[0] == static_cast<std::int64_t>(labels.size()),
            "cross_entropy shape mismatch");
    const std::int64_t n = lv.shape[0], c = lv.shape[1];
    for (int label : labels) {
      require(label >= 0 && label < c, "cross_entropy: label out of range");
    }
    double total = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
      const Scalar* row = &lv.values[r * c];
      Scalar m = row[0];
      for (std::int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
      double sum = 0.0;
      for (std::int64_t j = 0; j < c; ++j) sum += std::exp(double(row[j] - m));
      total += double(m) + std::log(sum) - double(row[labels[r]]);
    }
    auto labels_ptr = std::make_shared<const std::vector<int>>(std::move(labels));
    const Ref id = push(TensorValue<Scalar>::scalar(Scalar(total / double(n))), {logits}, nullptr);
    nodes_[id].backward = [this, id, logits, labels_ptr]() {
      const Scalar upstream = grad(id).values[0];
      const auto& lv2 = value(logits);
      const std::int64_t n2 = lv2.shape[0], c2 = lv2.shape[1];
      auto& gl = grad(logits).values;
      const Scalar inv_n = Scalar(1) / Scalar(n2);
      for (std::int64_t r = 0; r < n2; ++r) {
        const Scalar* row = &lv2.values[r * c2];
        Scalar m = row[0];
        for (std::int64_t j = 1; j < c2; ++j) m = std::max(m, row[j]);
        Scalar sum = Scalar(0);
        for (std::int64_t j = 0; j < c2; ++j) sum += std::exp(row[j] - m);
        for (std::int64_t j = 0; j < c2; ++j) {
          const Scalar p = std::exp(row[j] - m) / sum;
          const Scalar target = (j == (*labels_ptr)[r]) ? Scalar(1) : Scalar(0);
          gl[r * c2 + j] += upstream * inv_n * (p - target);
        }
      }
    };
    return id;
  }

  Ref sum_scalars(const std::vector<Ref>& terms) {
    require(!terms.empty(), "sum_scalars: empty");
    Scalar total = Scalar(0);
    for (Ref t : terms) {
      require(value(t).size() == 1, "sum_scalars expects scalars");
      total += value(t).values[0];
    }
    const Ref id = push(TensorValue<Scalar>::scalar(total), terms, nullptr);
    auto terms_copy = std::make_shared<const std::vector<Ref>>(terms);
    nodes_[id].backward = [this, id, terms_copy]() {
      const Scalar g = grad(id).values[0];
      for (Ref t : *terms_copy) grad(t).values[0] += g;
    };
    return id;
  }

  /// Sum of all elements (used by tests and tiny models).
  Ref sum(Ref a) {
    Scalar total = Scalar(0);
    for (Scalar v : value(a).values) total += v;
    const Ref id = push(TensorValue<Scalar>::scalar(total), {a}, nullptr);
    nodes_[id].backward = [this, id, a]() {
      const Scalar g = grad(id).values[0];
      for (auto& v : grad(a).values) v += g;
    };
    return id;
  }

  /// Reverse sweep from a scalar loss. Parameter gradients accumulate into
  /// the store (call store->zero_grad() between steps).
  void backward(Ref loss) {
    require(value(loss).size() == 1, "backward expects a scalar loss");
    for (auto& n : nodes_) {
      n.grad = TensorValue<Scalar>();
      n.grad.shape = n.value.shape;
      n.grad.values.assign(n.value.values.size(), Scalar(0));
    }
    nodes_[loss].grad.values[0] = Scalar(1);
    for (Ref id = loss; id >= 0; --id) {
      if (nodes_[id].backward) nodes_[id].backward();
    }
  }

 private:
  struct Node {
    TensorValue<Scalar> value;
    TensorValue<Scalar> grad;
    std::function<void()> backward;
  };

  static void require(bool ok, const char* message) {
    if (!ok) throw std::runtime_error(message);
  }

  Ref push(TensorValue<Scalar> value, std::initializer_list<Ref> parents,
           std::function<void()> backward) {
    return push(std::move(value), std::vector<Ref>(parents), std::move(backward));
  }
  Ref push(TensorValue<Scalar> value, const std::vector<Ref>& parents,
           std::function<void()> backward) {
    for (Ref p : parents) require(p >= 0 && p < static_cast<Ref>(nodes_.size()), "bad parent ref");
    nodes_.push_back(Node{std::move(value), {}, std::move(backward)});
    return static_cast<Ref>(nodes_.size()) - 1;
  }

  ParameterStore<Scalar>* store_;
  std::vector<Node> nodes_;
};

}  // namespace treelabel::nn
