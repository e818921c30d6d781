#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// Design: define-by-run. A Graph records one backward closure per executed
// op; Graph::backward replays them in reverse from a scalar loss. Tensors are
// cheap handles onto shared storage, so parameters survive Graph::clear()
// between training steps while intermediates are dropped with their closures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "temposurv/errors.hpp"

namespace temposurv::ad {

using Shape = std::vector<int>;
using Mask = std::vector<std::uint8_t>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = std::move(shape);
    t.s_->v.assign(static_cast<std::size_t>(shape_size(t.s_->shape)), 0.0);
    t.s_->requires_grad = requires_grad;
    if (requires_grad) t.s_->g.assign(t.s_->v.size(), 0.0);
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    if (values.size() != t.s_->v.size())
      throw DimensionError("value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(t.shape()));
    t.s_->v = std::move(values);
    return t;
  }

  static Tensor scalar(double x, bool requires_grad = false) {
    return from({1}, {x}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(s_->v.size()); }
  int rank() const { return static_cast<int>(s_->shape.size()); }

  int rows() const { return rank() == 2 ? s_->shape[0] : (rank() == 1 ? 1 : -1); }
  int cols() const { return rank() == 2 ? s_->shape[1] : (rank() == 1 ? s_->shape[0] : -1); }

  std::vector<double>& values() { return s_->v; }
  const std::vector<double>& values() const { return s_->v; }
  double operator[](std::size_t i) const { return s_->v[i]; }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  std::vector<double>& grad() { return s_->g; }
  const std::vector<double>& grad() const { return s_->g; }

  void zero_grad() {
    if (requires_grad()) std::fill(s_->g.begin(), s_->g.end(), 0.0);
  }

  double item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return s_->v[0];
  }

  bool all_finite() const {
    for (double x : s_->v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  // identity of the underlying storage, for aliasing checks in tests
  const void* storage_id() const { return s_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // same length as v when requires_grad
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

namespace detail {
inline void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined tensor");
}
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}
}  // namespace detail

// Records executed ops and replays their local gradients in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // When false, ops run forward-only and record nothing (inference mode).
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  std::size_t ops_recorded() const { return tape_.size(); }

  void clear() { tape_.clear(); }

  void backward(Tensor loss) {
    if (loss.size() != 1) throw DimensionError("backward: loss must be scalar");
    if (!loss.requires_grad()) throw DomainError("backward: loss does not require grad");
    loss.grad()[0] += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

  // ---- leaf helpers ----------------------------------------------------

  Tensor constant(Shape shape, std::vector<double> values) {
    return Tensor::from(std::move(shape), std::move(values), false);
  }
  Tensor constant_scalar(double x) { return Tensor::scalar(x, false); }

  // ---- binary elementwise ---------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "add");
    detail::check_defined(b, "add");
    detail::check_same_shape(a, b, "add");
    Tensor out = make_like(a);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i];
        if (bc.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) bc.grad()[i] += g[i];
      });
    }
    return out;
  }

  Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "sub");
    detail::check_defined(b, "sub");
    detail::check_same_shape(a, b, "sub");
    Tensor out = make_like(a);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i];
        if (bc.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) bc.grad()[i] -= g[i];
      });
    }
    return out;
  }

  Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "mul");
    detail::check_defined(b, "mul");
    detail::check_same_shape(a, b, "mul");
    Tensor out = make_like(a);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i] * bc.values()[i];
        if (bc.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) bc.grad()[i] += g[i] * ac.values()[i];
      });
    }
    return out;
  }

  Tensor scale(const Tensor& a, double s) {
    detail::check_defined(a, "scale");
    Tensor out = make_like(a);
    const auto& av = a.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
    if (track(out, {a})) {
      Tensor ac = a, oc = out;
      record([ac, oc, s]() mutable {
        const auto& g = oc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ac.grad()[i] += g[i] * s;
      });
    }
    return out;
  }

  // [r x c] + [c], the one broadcast the model needs
  Tensor add_bias(const Tensor& m, const Tensor& bias) {
    detail::check_defined(m, "add_bias");
    detail::check_defined(bias, "add_bias");
    if (m.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != m.shape()[1])
      throw DimensionError("add_bias: want [r x c] + [c], got " + shape_str(m.shape()) +
                           " + " + shape_str(bias.shape()));
    const int r = m.shape()[0], c = m.shape()[1];
    Tensor out = make_like(m);
    const auto& mv = m.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ov[i * c + j] = mv[i * c + j] + bv[j];
    if (track(out, {m, bias})) {
      Tensor mc = m, bc = bias, oc = out;
      record([mc, bc, oc, r, c]() mutable {
        const auto& g = oc.grad();
        if (mc.requires_grad())
          for (std::size_t i = 0; i < g.size(); ++i) mc.grad()[i] += g[i];
        if (bc.requires_grad())
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) bc.grad()[j] += g[i * c + j];
      });
    }
    return out;
  }

  // ---- unary elementwise ----------------------------------------------

  Tensor tanh(const Tensor& x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); },
                 [](double, double y) { return 1.0 - y * y; });
  }

  Tensor relu(const Tensor& x) {
    return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
  }

  Tensor sigmoid(const Tensor& x) {
    return unary(x, "sigmoid",
                 [](double v) {
                   if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                   double e = std::exp(v);
                   return e / (1.0 + e);
                 },
                 [](double, double y) { return y * (1.0 - y); });
  }

  Tensor exp(const Tensor& x) {
    return unary(x, "exp", [](double v) { return std::exp(v); },
                 [](double, double y) { return y; });
  }

  Tensor log(const Tensor& x) {
    detail::check_defined(x, "log");
    for (double v : x.values())
      if (v <= 0.0)
        throw DomainError("log: input must be strictly positive, got " + std::to_string(v));
    return unary(x, "log", [](double v) { return std::log(v); },
                 [](double v, double) { return 1.0 / v; });
  }

  // ---- structural ------------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "matmul");
    detail::check_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
      throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                           shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out = Tensor::zeros({m, n});
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const double av_ip = av[i * k + p];
        if (av_ip == 0.0) continue;
        for (int j = 0; j < n; ++j) ov[i * n + j] += av_ip * bv[p * n + j];
      }
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc, m, k, n]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad()) {
          auto& ga = ac.grad();
          const auto& bv2 = bc.values();
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += g[i * n + j] * bv2[p * n + j];
              ga[i * k + p] += acc;
            }
        }
        if (bc.requires_grad()) {
          auto& gb = bc.grad();
          const auto& av2 = ac.values();
          for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
              const double a_ip = av2[i * k + p];
              if (a_ip == 0.0) continue;
              for (int j = 0; j < n; ++j) gb[p * n + j] += a_ip * g[i * n + j];
            }
        }
      });
    }
    return out;
  }

  // row-vector times matrix: [k] . [k x c] -> [c]
  Tensor vecmat(const Tensor& v, const Tensor& b) {
    detail::check_defined(v, "vecmat");
    detail::check_defined(b, "vecmat");
    if (v.rank() != 1 || b.rank() != 2 || v.shape()[0] != b.shape()[0])
      throw DimensionError("vecmat: incompatible shapes " + shape_str(v.shape()) + " and " +
                           shape_str(b.shape()));
    const int k = b.shape()[0], c = b.shape()[1];
    Tensor out = Tensor::zeros({c});
    const auto& vv = v.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (int p = 0; p < k; ++p) {
      const double vp = vv[p];
      if (vp == 0.0) continue;
      for (int j = 0; j < c; ++j) ov[j] += vp * bv[p * c + j];
    }
    if (track(out, {v, b})) {
      Tensor vc = v, bc = b, oc = out;
      record([vc, bc, oc, k, c]() mutable {
        const auto& g = oc.grad();
        if (vc.requires_grad()) {
          const auto& bv2 = bc.values();
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int j = 0; j < c; ++j) acc += g[j] * bv2[p * c + j];
            vc.grad()[p] += acc;
          }
        }
        if (bc.requires_grad()) {
          const auto& vv2 = vc.values();
          for (int p = 0; p < k; ++p) {
            const double vp = vv2[p];
            if (vp == 0.0) continue;
            for (int j = 0; j < c; ++j) bc.grad()[p * c + j] += vp * g[j];
          }
        }
      });
    }
    return out;
  }

  Tensor transpose(const Tensor& m) {
    detail::check_defined(m, "transpose");
    if (m.rank() != 2) throw DimensionError("transpose: rank-2 tensor required");
    const int r = m.shape()[0], c = m.shape()[1];
    Tensor out = Tensor::zeros({c, r});
    const auto& mv = m.values();
    auto& ov = out.values();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) ov[j * r + i] = mv[i * c + j];
    if (track(out, {m})) {
      Tensor mc = m, oc = out;
      record([mc, oc, r, c]() mutable {
        const auto& g = oc.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) mc.grad()[i * c + j] += g[j * r + i];
      });
    }
    return out;
  }

  Tensor reshape(const Tensor& x, Shape shape) {
    detail::check_defined(x, "reshape");
    if (shape_size(shape) != x.size())
      throw DimensionError("reshape: size mismatch " + shape_str(x.shape()) + " -> " +
                           shape_str(shape));
    Tensor out = Tensor::from(std::move(shape), x.values());
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      record([xc, oc]() mutable {
        const auto& g = oc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) xc.grad()[i] += g[i];
      });
    }
    return out;
  }

  // vector concat
  Tensor concat(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "concat");
    detail::check_defined(b, "concat");
    if (a.rank() != 1 || b.rank() != 1)
      throw DimensionError("concat: rank-1 tensors required");
    const int na = a.shape()[0], nb = b.shape()[0];
    Tensor out = Tensor::zeros({na + nb});
    auto& ov = out.values();
    std::copy(a.values().begin(), a.values().end(), ov.begin());
    std::copy(b.values().begin(), b.values().end(), ov.begin() + na);
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc, na, nb]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad())
          for (int i = 0; i < na; ++i) ac.grad()[i] += g[i];
        if (bc.requires_grad())
          for (int i = 0; i < nb; ++i) bc.grad()[i] += g[na + i];
      });
    }
    return out;
  }

  // [r x c1], [r x c2] -> [r x (c1+c2)]
  Tensor concat_cols(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "concat_cols");
    detail::check_defined(b, "concat_cols");
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
      throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    const int r = a.shape()[0], c1 = a.shape()[1], c2 = b.shape()[1];
    Tensor out = Tensor::zeros({r, c1 + c2});
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c1; ++j) ov[i * (c1 + c2) + j] = av[i * c1 + j];
      for (int j = 0; j < c2; ++j) ov[i * (c1 + c2) + c1 + j] = bv[i * c2 + j];
    }
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc, r, c1, c2]() mutable {
        const auto& g = oc.grad();
        if (ac.requires_grad())
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c1; ++j) ac.grad()[i * c1 + j] += g[i * (c1 + c2) + j];
        if (bc.requires_grad())
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c2; ++j) bc.grad()[i * c2 + j] += g[i * (c1 + c2) + c1 + j];
      });
    }
    return out;
  }

  Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no rows");
    const int c = rows[0].shape()[0];
    for (const Tensor& r : rows) {
      detail::check_defined(r, "stack_rows");
      if (r.rank() != 1 || r.shape()[0] != c)
        throw DimensionError("stack_rows: inconsistent row shapes");
    }
    const int n = static_cast<int>(rows.size());
    Tensor out = Tensor::zeros({n, c});
    auto& ov = out.values();
    for (int i = 0; i < n; ++i)
      std::copy(rows[i].values().begin(), rows[i].values().end(), ov.begin() + i * c);
    bool any = false;
    for (const Tensor& r : rows) any = any || r.requires_grad();
    if (recording_ && any) {
      mark_grad(out);
      std::vector<Tensor> rc = rows;
      Tensor oc = out;
      record([rc, oc, c]() mutable {
        const auto& g = oc.grad();
        for (std::size_t i = 0; i < rc.size(); ++i) {
          if (!rc[i].requires_grad()) continue;
          for (int j = 0; j < c; ++j) rc[i].grad()[j] += g[i * c + j];
        }
      });
    }
    return out;
  }

  Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw DimensionError("stack_scalars: empty");
    const int n = static_cast<int>(xs.size());
    Tensor out = Tensor::zeros({n});
    auto& ov = out.values();
    bool any = false;
    for (int i = 0; i < n; ++i) {
      detail::check_defined(xs[i], "stack_scalars");
      if (xs[i].size() != 1) throw DimensionError("stack_scalars: scalar tensors required");
      ov[i] = xs[i].values()[0];
      any = any || xs[i].requires_grad();
    }
    if (recording_ && any) {
      mark_grad(out);
      std::vector<Tensor> xc = xs;
      Tensor oc = out;
      record([xc, oc]() mutable {
        const auto& g = oc.grad();
        for (std::size_t i = 0; i < xc.size(); ++i)
          if (xc[i].requires_grad()) xc[i].grad()[0] += g[i];
      });
    }
    return out;
  }

  Tensor row(const Tensor& m, int i) {
    detail::check_defined(m, "row");
    if (m.rank() != 2) throw DimensionError("row: rank-2 tensor required");
    const int r = m.shape()[0], c = m.shape()[1];
    if (i < 0 || i >= r) throw DimensionError("row: index out of range");
    Tensor out = Tensor::zeros({c});
    std::copy(m.values().begin() + i * c, m.values().begin() + (i + 1) * c,
              out.values().begin());
    if (track(out, {m})) {
      Tensor mc = m, oc = out;
      record([mc, oc, i, c]() mutable {
        const auto& g = oc.grad();
        for (int j = 0; j < c; ++j) mc.grad()[i * c + j] += g[j];
      });
    }
    return out;
  }

  Tensor pick(const Tensor& x, int flat_index) {
    detail::check_defined(x, "pick");
    if (flat_index < 0 || flat_index >= x.size())
      throw DimensionError("pick: index out of range");
    Tensor out = Tensor::scalar(x.values()[flat_index]);
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      record([xc, oc, flat_index]() mutable { xc.grad()[flat_index] += oc.grad()[0]; });
    }
    return out;
  }

  // ---- reductions ------------------------------------------------------

  Tensor sum(const Tensor& x) {
    detail::check_defined(x, "sum");
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      record([xc, oc]() mutable {
        const double g = oc.grad()[0];
        for (auto& gi : xc.grad()) gi += g;
      });
    }
    return out;
  }

  Tensor dot(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "dot");
    detail::check_defined(b, "dot");
    if (a.rank() != 1 || b.rank() != 1 || a.shape() != b.shape())
      throw DimensionError("dot: shape mismatch " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    double acc = 0.0;
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    Tensor out = Tensor::scalar(acc);
    if (track(out, {a, b})) {
      Tensor ac = a, bc = b, oc = out;
      record([ac, bc, oc]() mutable {
        const double g = oc.grad()[0];
        if (ac.requires_grad())
          for (std::size_t i = 0; i < ac.values().size(); ++i)
            ac.grad()[i] += g * bc.values()[i];
        if (bc.requires_grad())
          for (std::size_t i = 0; i < bc.values().size(); ++i)
            bc.grad()[i] += g * ac.values()[i];
      });
    }
    return out;
  }

  // ---- model-specific ops ---------------------------------------------

  // Row-wise masked softmax over the trailing dimension. A mask of length
  // cols is applied to every row; a mask of the full size is per-entry.
  // Masked entries are exactly zero in the output and get zero gradient.
  Tensor softmax(const Tensor& x, const Mask* mask = nullptr) {
    detail::check_defined(x, "softmax");
    if (x.rank() != 1 && x.rank() != 2)
      throw DimensionError("softmax: rank-1 or rank-2 tensor required");
    const int r = x.rank() == 2 ? x.shape()[0] : 1;
    const int c = x.rank() == 2 ? x.shape()[1] : x.shape()[0];
    bool tile = false;
    if (mask) {
      if (mask->size() == static_cast<std::size_t>(c))
        tile = true;
      else if (mask->size() != static_cast<std::size_t>(x.size()))
        throw MaskError("softmax: mask length " + std::to_string(mask->size()) +
                        " matches neither row length " + std::to_string(c) +
                        " nor tensor size " + std::to_string(x.size()));
    }
    Tensor out = make_like(x, /*propagate=*/false);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (int i = 0; i < r; ++i) {
      const std::uint8_t* mrow = nullptr;
      if (mask) mrow = tile ? mask->data() : mask->data() + i * c;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j)
        if (!mrow || mrow[j]) mx = std::max(mx, xv[i * c + j]);
      if (!std::isfinite(mx)) throw MaskError("softmax: fully masked row " + std::to_string(i));
      double z = 0.0;
      for (int j = 0; j < c; ++j) {
        if (mrow && !mrow[j]) {
          ov[i * c + j] = 0.0;
        } else {
          ov[i * c + j] = std::exp(xv[i * c + j] - mx);
          z += ov[i * c + j];
        }
      }
      for (int j = 0; j < c; ++j) ov[i * c + j] /= z;
    }
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      Mask mcopy = mask ? *mask : Mask{};
      bool has_mask = mask != nullptr;
      record([xc, oc, mcopy, has_mask, tile, r, c]() mutable {
        const auto& g = oc.grad();
        const auto& y = oc.values();
        for (int i = 0; i < r; ++i) {
          const std::uint8_t* mrow = nullptr;
          if (has_mask) mrow = tile ? mcopy.data() : mcopy.data() + i * c;
          double inner = 0.0;
          for (int j = 0; j < c; ++j)
            if (!mrow || mrow[j]) inner += y[i * c + j] * g[i * c + j];
          for (int j = 0; j < c; ++j)
            if (!mrow || mrow[j])
              xc.grad()[i * c + j] += y[i * c + j] * (g[i * c + j] - inner);
        }
      });
    }
    return out;
  }

  Tensor l2_normalize(const Tensor& x) {
    detail::check_defined(x, "l2_normalize");
    if (x.rank() != 1) throw DimensionError("l2_normalize: rank-1 tensor required");
    double nrm = 0.0;
    for (double v : x.values()) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) throw DomainError("l2_normalize: zero vector");
    Tensor out = make_like(x, /*propagate=*/false);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] / nrm;
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      record([xc, oc, nrm]() mutable {
        const auto& g = oc.grad();
        const auto& y = oc.values();
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i)
          xc.grad()[i] += (g[i] - gy * y[i]) / nrm;
      });
    }
    return out;
  }

  // y_t = prod_{s<=t} v_s
  Tensor cumprod(const Tensor& v) {
    detail::check_defined(v, "cumprod");
    if (v.rank() != 1) throw DimensionError("cumprod: rank-1 tensor required");
    const int n = v.shape()[0];
    Tensor out = Tensor::zeros({n});
    const auto& vv = v.values();
    auto& ov = out.values();
    double acc = 1.0;
    for (int i = 0; i < n; ++i) {
      acc *= vv[i];
      ov[i] = acc;
    }
    if (track(out, {v})) {
      Tensor vc = v, oc = out;
      record([vc, oc, n]() mutable {
        // dL/dv_j = sum_{t>=j} g_t * prod_{s<=t, s!=j} v_s, computed without
        // dividing so zero entries stay well-defined
        const auto& g = oc.grad();
        const auto& vv2 = vc.values();
        std::vector<double> prefix(n + 1, 1.0);
        for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * vv2[i];
        for (int j = 0; j < n; ++j) {
          double run = prefix[j];  // prod_{s<j} v_s
          double acc2 = g[j] * run;
          double tail = run;
          for (int t = j + 1; t < n; ++t) {
            tail *= vv2[t];
            acc2 += g[t] * tail;
          }
          vc.grad()[j] += acc2;
        }
      });
    }
    return out;
  }

  // Row-wise layer norm with learnable gain/bias.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5) {
    detail::check_defined(x, "layer_norm");
    if (x.rank() != 2) throw DimensionError("layer_norm: rank-2 tensor required");
    const int r = x.shape()[0], c = x.shape()[1];
    if (gain.rank() != 1 || gain.shape()[0] != c || bias.rank() != 1 || bias.shape()[0] != c)
      throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(c) + "]");
    Tensor out = Tensor::zeros({r, c});
    std::vector<double> inv_std(r), xhat(static_cast<std::size_t>(r) * c);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (int i = 0; i < r; ++i) {
      double mean = 0.0;
      for (int j = 0; j < c; ++j) mean += xv[i * c + j];
      mean /= c;
      double var = 0.0;
      for (int j = 0; j < c; ++j) {
        const double d = xv[i * c + j] - mean;
        var += d * d;
      }
      var /= c;
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (int j = 0; j < c; ++j) {
        xhat[i * c + j] = (xv[i * c + j] - mean) * inv_std[i];
        ov[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
      }
    }
    if (track(out, {x, gain, bias})) {
      Tensor xc = x, gc = gain, bc = bias, oc = out;
      record([xc, gc, bc, oc, inv_std, xhat, r, c]() mutable {
        const auto& g = oc.grad();
        const auto& gv2 = gc.values();
        for (int i = 0; i < r; ++i) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < c; ++j) {
            const double dxhat = g[i * c + j] * gv2[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat[i * c + j];
          }
          if (xc.requires_grad()) {
            for (int j = 0; j < c; ++j) {
              const double dxhat = g[i * c + j] * gv2[j];
              xc.grad()[i * c + j] += inv_std[i] * (dxhat - sum_dxhat / c -
                                                    xhat[i * c + j] * sum_dxhat_xhat / c);
            }
          }
          if (gc.requires_grad())
            for (int j = 0; j < c; ++j) gc.grad()[j] += g[i * c + j] * xhat[i * c + j];
          if (bc.requires_grad())
            for (int j = 0; j < c; ++j) bc.grad()[j] += g[i * c + j];
        }
      });
    }
    return out;
  }

 private:
  template <typename F, typename DF>
  Tensor unary(const Tensor& x, const char* name, F fwd, DF dfd) {
    detail::check_defined(x, name);
    Tensor out = make_like(x, /*propagate=*/false);
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
    if (track(out, {x})) {
      Tensor xc = x, oc = out;
      record([xc, oc, dfd]() mutable {
        const auto& g = oc.grad();
        const auto& xv2 = xc.values();
        const auto& y = oc.values();
        for (std::size_t i = 0; i < g.size(); ++i)
          xc.grad()[i] += g[i] * dfd(xv2[i], y[i]);
      });
    }
    return out;
  }

  Tensor make_like(const Tensor& x, bool /*propagate*/ = false) {
    return Tensor::zeros(x.shape());
  }

  static void mark_grad(Tensor& t) {
    // promote an output to grad-carrying by rebuilding its storage
    Tensor with = Tensor::from(t.shape(), t.values(), true);
    t = with;
  }

  // Returns true (and upgrades `out` to carry grad) when recording applies.
  bool track(Tensor& out, std::initializer_list<Tensor> inputs) {
    if (!recording_) return false;
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.requires_grad();
    if (!any) return false;
    mark_grad(out);
    return true;
  }

  void record(std::function<void()> f) { tape_.push_back(std::move(f)); }

  std::vector<std::function<void()>> tape_;
  bool recording_ = true;
};

}  // namespace temposurv::ad
