// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stochdiff Authors.
#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// A Tape owns every intermediate value of one evaluation. Operations append
// nodes in topological order, so backward() is a single reverse sweep.
// Parameters enter as leaves that alias the ParameterSet storage (no copy);
// their gradients are folded back with accumulate_param_grads().

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <string_view>
#include <vector>

#include "stochdiff/params.hpp"
#include "stochdiff/tensor.hpp"

namespace stochdiff {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  double scalar() const { return value()(0, 0); }
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  /// With record == false no backward closures are stored (inference mode).
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(1024); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor v) { return push_leaf(std::move(v), false); }

  /// Leaf whose gradient is tracked, e.g. an input under a gradient check.
  Var variable(Tensor v) { return push_leaf(std::move(v), record_); }

  Var param(const ParameterSet& ps, std::size_t index) {
    bind(ps);
    std::size_t& slot = param_node_[index];
    if (slot != kNone) return Var(this, slot);
    Node n;
    n.ext = &ps[index].value;
    n.needs_grad = record_;
    n.param_index = index;
    nodes_.push_back(std::move(n));
    slot = nodes_.size() - 1;
    return Var(this, slot);
  }

  Var param(const ParameterSet& ps, std::string_view name) { return param(ps, ps.index_of(name)); }

  /// Appends an op node. `fn` is only retained when some parent needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    if (record_) {
      for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
    }
    Node n;
    n.own = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated (zeroed) on first touch.
  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      const Tensor& v = n.ext ? *n.ext : n.own;
      n.grad = Tensor(v.rows, v.cols);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient of the last backward() target with respect to v (zeros if unreached).
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.has_grad) return n.grad;
    const Tensor& val = value(v.id());
    return Tensor(val.rows, val.cols);
  }

  void backward(Var loss) {
    if (!record_) throw std::logic_error("backward() on a non-recording tape");
    const Tensor& lv = value(loss.id());
    if (lv.rows != 1 || lv.cols != 1) throw ShapeError("backward() needs a 1x1 loss, got " + lv.shape_string());
    for (auto& n : nodes_) {
      n.has_grad = false;
    }
    grad_ref(loss.id())(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  /// Adds parameter-leaf gradients into `ps.grad` (ps must be the bound set).
  void accumulate_param_grads(ParameterSet& ps) const {
    if (bound_ != nullptr && bound_ != &ps) throw std::logic_error("tape bound to a different ParameterSet");
    for (const Node& n : nodes_) {
      if (n.param_index == kNone || !n.has_grad) continue;
      Tensor& g = ps[n.param_index].grad;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

  /// Adds parameter gradients into an external buffer list indexed like the ParameterSet.
  void accumulate_param_grads(std::vector<Tensor>& grads) const {
    for (const Node& n : nodes_) {
      if (n.param_index == kNone || !n.has_grad) continue;
      Tensor& g = grads[n.param_index];
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }

  void clear() {
    nodes_.clear();
    std::fill(param_node_.begin(), param_node_.end(), kNone);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  struct Node {
    Tensor own;
    const Tensor* ext = nullptr;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    std::size_t param_index = kNone;
    Backward backward;
  };

  Var push_leaf(Tensor v, bool needs) {
    Node n;
    n.own = std::move(v);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  void bind(const ParameterSet& ps) {
    if (bound_ == &ps && param_node_.size() == ps.size()) return;
    if (bound_ != nullptr && bound_ != &ps && !nodes_.empty()) {
      throw std::logic_error("a tape may reference a single ParameterSet");
    }
    bound_ = &ps;
    param_node_.assign(ps.size(), kNone);
  }

  std::vector<Node> nodes_;
  const ParameterSet* bound_ = nullptr;
  std::vector<std::size_t> param_node_;
  bool record_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace ad {

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

template <class F>
Var unary(Var a, F&& f, Tape::Backward bw) {
  const Tensor& av = a.value();
  Tensor out(av.rows, av.cols);
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  return a.tape()->push(std::move(out), {a}, std::move(bw));
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tensor out = stochdiff::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) matmul_accumulate(g, transpose(t.value(ib)), t.grad_ref(ia));
    if (t.needs_grad(ib)) matmul_accumulate(transpose(t.value(ia)), g, t.grad_ref(ib));
  });
}

inline Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  detail::add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) detail::add_into(t.grad_ref(ia), g);
    if (t.needs_grad(ib)) detail::add_into(t.grad_ref(ib), g);
  });
}

inline Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) detail::add_into(t.grad_ref(ia), g);
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] -= g[k];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_ref(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * bv[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += g[k] * av[k];
    }
  });
}

/// Elementwise quotient.
inline Var div(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= bv[k];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] / bv[k];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t k = 0; k < gb.size(); ++k) gb[k] -= g[k] * av[k] / (bv[k] * bv[k]);
    }
  });
}

/// a (m x n) + row (1 x n) broadcast over rows.
inline Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows != 1 || rv.cols != av.cols) throw ShapeError("add_row: " + av.shape_string() + " + " + rv.shape_string());
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += rv(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape()->push(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) detail::add_into(t.grad_ref(ia), g);
    if (t.needs_grad(ir)) {
      Tensor& gr = t.grad_ref(ir);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gr(0, j) += g(i, j);
    }
  });
}

/// Column vector (m x 1) repeated to m x n.
inline Var broadcast_cols(Var column, std::size_t n) {
  const Tensor& cv = column.value();
  if (cv.cols != 1) throw ShapeError("broadcast_cols expects a column, got " + cv.shape_string());
  Tensor out(cv.rows, n);
  for (std::size_t i = 0; i < cv.rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = cv(i, 0);
  const std::size_t ic = column.id();
  return column.tape()->push(std::move(out), {column}, [ic](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gc = t.grad_ref(ic);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gc(i, 0) += g(i, j);
  });
}

inline Var scale(Var a, double c) {
  const std::size_t ia = a.id();
  return detail::unary(a, [c](double x) { return c * x; }, [ia, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += c * g[k];
  });
}

inline Var add_scalar(Var a, double c) {
  const std::size_t ia = a.id();
  return detail::unary(a, [c](double x) { return x + c; }, [ia](Tape& t, std::size_t self) {
    detail::add_into(t.grad_ref(ia), t.grad_ref(self));
  });
}

inline Var tanh(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return std::tanh(x); }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, sigmoid_scalar, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * y[k] * (1.0 - y[k]);
  });
}

inline Var relu(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += x[k] > 0 ? g[k] : 0.0;
  });
}

inline Var softplus(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, softplus_scalar, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * sigmoid_scalar(x[k]);
  });
}

inline Var exp(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return std::exp(x); }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * y[k];
  });
}

inline Var log(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return std::log(x); }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] / x[k];
  });
}

inline Var sqrt(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return std::sqrt(x); }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k] * 0.5 / y[k];
  });
}

inline Var square(Var a) {
  const std::size_t ia = a.id();
  return detail::unary(a, [](double x) { return x * x; }, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += 2.0 * g[k] * x[k];
  });
}

/// max(a, floor); gradient passes only where a > floor.
inline Var clamp_min(Var a, double floor) {
  const std::size_t ia = a.id();
  return detail::unary(a, [floor](double x) { return x > floor ? x : floor; },
                       [ia, floor](Tape& t, std::size_t self) {
                         const Tensor& g = t.grad_ref(self);
                         const Tensor& x = t.value(ia);
                         Tensor& ga = t.grad_ref(ia);
                         for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += x[k] > floor ? g[k] : 0.0;
                       });
}

inline Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  Tensor out(av.rows, av.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < av.cols; ++j) mx = std::max(mx, av(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) s += (out(i, j) = std::exp(av(i, j) - mx));
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) /= s;
  }
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var transpose(Var a) {
  Tensor out = stochdiff::transpose(a.value());
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
  });
}

inline Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows != bv.rows) throw ShapeError("concat_cols: " + av.shape_string() + " | " + bv.shape_string());
  Tensor out(av.rows, av.cols + bv.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < bv.cols; ++j) out(i, av.cols + j) = bv(i, j);
  }
  const std::size_t ia = a.id(), ib = b.id(), ac = av.cols;
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, ac](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t i = 0; i < ga.rows; ++i)
        for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g(i, j);
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t i = 0; i < gb.rows; ++i)
        for (std::size_t j = 0; j < gb.cols; ++j) gb(i, j) += g(i, ac + j);
    }
  });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (start + count > av.cols) throw ShapeError("slice_cols out of range on " + av.shape_string());
  Tensor out(av.rows, count);
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, start](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, start + j) += g(i, j);
  });
}

/// Sum of all entries as a 1x1.
inline Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data) s += v;
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor(1, 1, s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad_ref(self)(0, 0);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g;
  });
}

}  // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }

}  // namespace stochdiff
