#pragma once

// Minimal dense tensor with tape-based reverse-mode differentiation.
//
// A Tensor is a shape plus shared 64-bit storage. Ops whose inputs are all
// unrecorded return plain values; if any input lives on a Tape, the result is
// recorded on that same tape together with its backward rule. Leaves are put
// on a tape with Tape::watch(). Gradients live on the tape, not in the
// tensors, so several tapes may read the same parameters concurrently.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lccal/error.hpp"

namespace lccal {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

class Tape;

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (data_->size() != shape_numel(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_->size()) + " values for shape " + shape_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

  static Tensor full(Shape shape, double value) {
    const std::size_t n = shape_numel(shape);
    return {std::move(shape), std::vector<double>(n, value)};
  }

  /// Rank-0 tensor.
  static Tensor scalar(double value) { return {Shape{}, {value}}; }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return {Shape{n}, std::move(values)};
  }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  std::span<const double> data() const { return data_ ? std::span<const double>(*data_) : std::span<const double>(); }

  /// Writes through to every tensor sharing this storage (parameters are
  /// updated in place by the optimizer).
  std::span<double> mutable_data() { return data_ ? std::span<double>(*data_) : std::span<double>(); }

  double operator[](std::size_t i) const { return (*data_)[i]; }

  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return (*data_)[0];
  }

  std::vector<double> to_vector() const { return data_ ? *data_ : std::vector<double>(); }

  /// Deep copy, detached from any tape.
  Tensor clone() const { return {shape_, to_vector()}; }

  /// Same storage, detached from any tape.
  Tensor detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    return t;
  }

  bool recorded() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

  const void* storage_id() const { return data_.get(); }

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Records operations in creation order, which is a topological order of the graph.
class Tape {
 public:
  /// Receives the output gradient and one span per parent (empty for constants),
  /// into which parent gradients must be accumulated.
  using BackwardFn = std::function<void(std::span<const double>, std::span<const std::span<double>>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `leaf` as a differentiable input. Watching the same storage twice
  /// returns the same node.
  Tensor watch(const Tensor& leaf) {
    if (!leaf.defined()) throw ContractError("watch() on an undefined tensor");
    if (leaf.tape_ == this) return leaf;
    if (leaf.tape_ != nullptr) throw ContractError("watch(): tensor already recorded on another tape");
    auto it = leaves_.find(leaf.storage_id());
    std::size_t id;
    if (it != leaves_.end()) {
      id = it->second;
    } else {
      id = nodes_.size();
      nodes_.push_back(Node{leaf.shape_, leaf.data_, {}, {}, {}});
      leaves_.emplace(leaf.storage_id(), id);
    }
    Tensor t = leaf;
    t.tape_ = this;
    t.node_ = id;
    return t;
  }

  Tensor record(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents, BackwardFn backward) {
    Tensor out(std::move(shape), std::move(value));
    Node node{out.shape_, out.data_, {}, std::move(backward), {}};
    node.parents.reserve(parents.size());
    for (const Tensor& p : parents) {
      if (p.tape_ == nullptr) {
        node.parents.push_back(kConstant);
      } else if (p.tape_ == this) {
        node.parents.push_back(p.node_);
      } else {
        throw ContractError("operation mixes tensors from different tapes");
      }
    }
    out.tape_ = this;
    out.node_ = nodes_.size();
    nodes_.push_back(std::move(node));
    return out;
  }

  /// Reverse sweep from a scalar loss. Replaces gradients from any earlier sweep.
  void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    if (loss.tape_ != this) throw ContractError("backward(): loss is not recorded on this tape");
    for (Node& n : nodes_) n.grad.clear();
    nodes_[loss.node_].grad.assign(1, 1.0);
    std::vector<std::span<double>> spans;
    for (std::size_t i = loss.node_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      spans.clear();
      for (std::size_t p : n.parents) {
        if (p == kConstant) {
          spans.emplace_back();
          continue;
        }
        Node& parent = nodes_[p];
        if (parent.grad.empty()) parent.grad.assign(parent.value->size(), 0.0);
        spans.emplace_back(parent.grad);
      }
      n.backward(n.grad, spans);
    }
  }

  /// Gradient of the last backward() loss w.r.t. `t`: zeros when `t` did not
  /// take part in the graph.
  std::vector<double> grad(const Tensor& t) const {
    const Node* n = nullptr;
    if (t.tape_ == this) {
      n = &nodes_[t.node_];
    } else if (auto it = leaves_.find(t.storage_id()); it != leaves_.end()) {
      n = &nodes_[it->second];
    }
    if (n == nullptr || n->grad.empty()) return std::vector<double>(t.numel(), 0.0);
    return n->grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr std::size_t kConstant = std::numeric_limits<std::size_t>::max();

  struct Node {
    Shape shape;
    std::shared_ptr<std::vector<double>> value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    std::vector<double> grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const void*, std::size_t> leaves_;
};

namespace detail {

inline Tape* common_tape(const std::vector<Tensor>& inputs) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (t.tape() == nullptr) continue;
    if (tape != nullptr && tape != t.tape()) throw ContractError("operation mixes tensors from different tapes");
    tape = t.tape();
  }
  return tape;
}

inline Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
                          Tape::BackwardFn backward) {
  Tape* tape = common_tape(parents);
  if (tape == nullptr) return {std::move(shape), std::move(value)};
  return tape->record(std::move(shape), std::move(value), parents, std::move(backward));
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

inline void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](auto g, auto pg) {
    for (std::size_t k = 0; k < 2; ++k)
      if (!pg[k].empty())
        for (std::size_t i = 0; i < g.size(); ++i) pg[k][i] += g[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](auto g, auto pg) {
    if (!pg[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
    if (!pg[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] -= g[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [a, b](auto g, auto pg) {
    if (!pg[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * b[i];
    if (!pg[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) pg[1][i] += g[i] * a[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result(a.shape(), std::move(out), {a}, [s](auto g, auto pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i] * s;
  });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return detail::make_result(x.shape(), std::move(out), {x}, [x](auto g, auto pg) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) pg[0][i] += g[i];
  });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.1) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return detail::make_result(x.shape(), std::move(out), {x}, [x, slope](auto g, auto pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += x[i] > 0.0 ? g[i] : slope * g[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and shape

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({}, {s}, {x}, [](auto g, auto pg) {
    for (double& v : pg[0]) v += g[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({}, {s / n}, {x}, [n](auto g, auto pg) {
    for (double& v : pg[0]) v += g[0] / n;
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  return detail::make_result(std::move(shape), x.to_vector(), {x}, [](auto g, auto pg) {
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
  });
}

/// Concatenation along the leading axis; trailing extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat: rank-0 inputs");
  shape[0] = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat: incompatible shapes " + shape_string(parts.front().shape()) + " and " +
                       shape_string(p.shape()));
    }
    shape[0] += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) sizes.push_back(p.numel());
  return detail::make_result(std::move(shape), std::move(out), parts, [sizes](auto g, auto pg) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (!pg[k].empty())
        for (std::size_t i = 0; i < sizes[k]; ++i) pg[k][i] += g[offset + i];
      offset += sizes[k];
    }
  });
}

/// (C, H, W) -> (C): global average pooling.
inline Tensor spatial_mean(const Tensor& x) {
  detail::require_rank("spatial_mean", x, 3, "input");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x[k * hw + i];
    out[k] = s / static_cast<double>(hw);
  }
  return detail::make_result({c}, std::move(out), {x}, [c, hw](auto g, auto pg) {
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < hw; ++i) pg[0][k * hw + i] += g[k] / static_cast<double>(hw);
  });
}

/// x / max(||x||, eps).
inline Tensor l2_normalize(const Tensor& x, double eps = 1e-12) {
  double n2 = 0.0;
  for (double v : x.data()) n2 += v * v;
  const double norm = std::sqrt(n2);
  const bool guarded = !(norm > eps);
  const double denom = guarded ? eps : norm;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / denom;
  const std::vector<double> y = out;
  return detail::make_result(x.shape(), std::move(out), {x}, [y, denom, guarded](auto g, auto pg) {
    // d(x/|x|) = (I - y y^T) / |x|
    double gy = 0.0;
    if (!guarded)
      for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += (g[i] - gy * y[i]) / denom;
  });
}

// ---------------------------------------------------------------------------
// Layers

/// (in) x (out, in) + (out) -> (out). `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {}) {
  detail::require_rank("linear", x, 1, "input");
  detail::require_rank("linear", weight, 2, "weight");
  const std::size_t out_n = weight.dim(0), in_n = weight.dim(1);
  if (x.dim(0) != in_n) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_n}) {
    throw ShapeError("linear: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  std::vector<double> out(out_n);
  Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out_n));
  detail::ConstMap w(weight.data().data(), static_cast<Eigen::Index>(out_n), static_cast<Eigen::Index>(in_n));
  Eigen::Map<const Eigen::VectorXd> xv(x.data().data(), static_cast<Eigen::Index>(in_n));
  y.noalias() = w * xv;
  if (bias.defined())
    for (std::size_t i = 0; i < out_n; ++i) out[i] += bias[i];
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_result({out_n}, std::move(out), parents, [x, weight, out_n, in_n](auto g, auto pg) {
    const auto on = static_cast<Eigen::Index>(out_n), inn = static_cast<Eigen::Index>(in_n);
    Eigen::Map<const Eigen::VectorXd> gv(g.data(), on);
    if (!pg[0].empty()) {
      detail::ConstMap w(weight.data().data(), on, inn);
      Eigen::Map<Eigen::VectorXd>(pg[0].data(), inn).noalias() += w.transpose() * gv;
    }
    if (!pg[1].empty()) {
      Eigen::Map<const Eigen::VectorXd> xv(x.data().data(), inn);
      detail::MutMap(pg[1].data(), on, inn).noalias() += gv * xv.transpose();
    }
    if (pg.size() > 2 && !pg[2].empty())
      for (std::size_t i = 0; i < out_n; ++i) pg[2][i] += g[i];
  });
}

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of (C, H, W) with (O, C, kh, kw) plus optional (O) bias,
/// zero padding. Lowered to a matrix product over an im2col buffer.
inline Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias = {}, Conv2dOptions opt = {}) {
  detail::require_rank("conv2d", x, 3, "input");
  detail::require_rank("conv2d", weight, 4, "weight");
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{o}) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()));
  }
  if (h + 2 * opt.padding < kh || w + 2 * opt.padding < kw) {
    throw ShapeError("conv2d: kernel " + shape_string(weight.shape()) + " larger than padded input " +
                     shape_string(x.shape()));
  }
  const std::size_t ho = (h + 2 * opt.padding - kh) / opt.stride + 1;
  const std::size_t wo = (w + 2 * opt.padding - kw) / opt.stride + 1;
  const std::size_t rows = c * kh * kw, cols_n = ho * wo;

  auto cols = std::make_shared<std::vector<double>>(rows * cols_n, 0.0);
  const double* xd = x.data().data();
  const auto pad = static_cast<std::ptrdiff_t>(opt.padding);
  const auto stride = static_cast<std::ptrdiff_t>(opt.stride);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = cols->data() + ((ci * kh + i) * kw + j) * cols_n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(i);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* src = xd + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(j);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) row[oy * wo + ox] = src[ix];
          }
        }
      }
    }
  }

  const auto on = static_cast<Eigen::Index>(o), rn = static_cast<Eigen::Index>(rows),
             cn = static_cast<Eigen::Index>(cols_n);
  std::vector<double> out(o * cols_n);
  detail::MutMap y(out.data(), on, cn);
  y.noalias() = detail::ConstMap(weight.data().data(), on, rn) * detail::ConstMap(cols->data(), rn, cn);
  if (bias.defined())
    for (std::size_t k = 0; k < o; ++k) y.row(static_cast<Eigen::Index>(k)).array() += bias[k];

  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_result(
      {o, ho, wo}, std::move(out), parents, [=, weight = weight](std::span<const double> g, auto pg) {
        detail::ConstMap gm(g.data(), on, cn);
        if (!pg[1].empty()) {
          detail::MutMap(pg[1].data(), on, rn).noalias() += gm * detail::ConstMap(cols->data(), rn, cn).transpose();
        }
        if (pg.size() > 2 && !pg[2].empty()) {
          for (std::size_t k = 0; k < o; ++k) pg[2][k] += gm.row(static_cast<Eigen::Index>(k)).sum();
        }
        if (!pg[0].empty()) {
          detail::RowMatrix dcols(rn, cn);
          dcols.noalias() = detail::ConstMap(weight.data().data(), on, rn).transpose() * gm;
          double* dx = pg[0].data();
          for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t i = 0; i < kh; ++i) {
              for (std::size_t j = 0; j < kw; ++j) {
                const double* row = dcols.data() + ((ci * kh + i) * kw + j) * cols_n;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const std::ptrdiff_t iy =
                      static_cast<std::ptrdiff_t>(oy) * stride - pad + static_cast<std::ptrdiff_t>(i);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  double* dst = dx + (ci * h + static_cast<std::size_t>(iy)) * w;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox) * stride - pad + static_cast<std::ptrdiff_t>(j);
                    if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += row[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Moments are indexed by the
/// position of each parameter in the span passed to step().
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::int64_t step_count() const { return step_; }

  void step(std::span<Tensor> params, std::span<const std::vector<double>> grads) {
    if (params.size() != grads.size()) {
      throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " + std::to_string(grads.size()) +
                       " gradients");
    }
    if (first_.empty()) {
      for (const Tensor& p : params) {
        first_.emplace_back(p.numel(), 0.0);
        second_.emplace_back(p.numel(), 0.0);
      }
    }
    if (first_.size() != params.size()) {
      throw ShapeError("adam: parameter count changed from " + std::to_string(first_.size()) + " to " +
                       std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].numel() != first_[k].size() || grads[k].size() != first_[k].size()) {
        throw ShapeError("adam: parameter " + std::to_string(k) + " has " + std::to_string(params[k].numel()) +
                         " values, gradient " + std::to_string(grads[k].size()) + ", state " +
                         std::to_string(first_[k].size()));
      }
    }
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      std::span<double> p = params[k].mutable_data();
      const std::vector<double>& g = grads[k];
      std::vector<double>& m = first_[k];
      std::vector<double>& v = second_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
    }
  }

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers and values little-endian):
//   "LCCALCKP"  u32 version  u32 count
//   count x { u32 name_len, name bytes, u32 rank, rank x u64 extent }
//   count x { numel x f64 }

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline constexpr char kCheckpointMagic[8] = {'L', 'C', 'C', 'A', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
void write_le(std::ostream& os, T v) {
  const T le = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

class ByteReader {
 public:
  explicit ByteReader(std::istream& is) : is_(is) {}

  template <typename T>
  T read(const char* what) {
    T v;
    read_bytes(reinterpret_cast<char*>(&v), sizeof(T), what);
    return to_little_endian(v);
  }

  void read_bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, offset_ + static_cast<std::size_t>(is_.gcount()));
    }
    offset_ += n;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& os, std::span<const NamedTensor> tensors) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) detail::write_le<std::uint64_t>(os, d);
  }
  for (const NamedTensor& t : tensors)
    for (double v : t.value.data()) detail::write_le<double>(os, v);
  if (!os) throw IoError("checkpoint: write failed");
}

inline std::vector<NamedTensor> load_checkpoint(std::istream& is) {
  detail::ByteReader in(is);
  char magic[sizeof(kCheckpointMagic)];
  in.read_bytes(magic, sizeof(magic), "magic");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw FormatError("checkpoint: bad magic bytes", 0);
  }
  const auto version = in.read<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), in.offset() - 4);
  }
  const auto count = in.read<std::uint32_t>("tensor count");
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = in.read<std::uint32_t>("name length");
    if (len > (1u << 16)) throw FormatError("checkpoint: implausible name length", in.offset() - 4);
    std::string name(len, '\0');
    in.read_bytes(name.data(), len, "name");
    const auto rank = in.read<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("checkpoint: implausible rank " + std::to_string(rank), in.offset() - 4);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.read<std::uint64_t>("extent"));
    table.emplace_back(std::move(name), std::move(shape));
  }
  std::vector<NamedTensor> out;
  for (auto& [name, shape] : table) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = in.read<double>("tensor data");
    out.push_back({name, Tensor(shape, std::move(values))});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, std::span<const NamedTensor> tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(os, tensors);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(is);
}

}  // namespace lccal
