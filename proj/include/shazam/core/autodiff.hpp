#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Leaves are either
// constants (never receive gradient) or parameters (gradient is accumulated
// into Parameter::grad by Tape::backward). Gradients flow only through nodes
// created with needs_grad, so stop_gradient() and constant() cut the graph.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shazam/core/error.hpp"

namespace shazam {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVectorD = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

inline Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

inline Matrix row_matrix(std::span<const float> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

inline std::vector<double> to_vector(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool needs_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
    Parameter* sink = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  Var param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, true, {}, &p});
    return Var(this, nodes_.size() - 1);
  }

  /// Records an interior node; `backward` receives this node's gradient.
  Var make(Matrix value, bool needs_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every parameter leaf.
  void backward(const Var& root) {
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::InvalidArgument,
            "backward() needs a scalar root");
    if (!nodes_[root.id()].needs_grad) return;
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(n.grad);
      if (n.sink != nullptr) {
        if (n.sink->grad.size() == 0) n.sink->grad = Matrix::Zero(n.value.rows(), n.value.cols());
        n.sink->grad += n.grad;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  // deque keeps node addresses stable as the tape grows.
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }
inline bool Var::needs_grad() const { return tape_->needs_grad(id_); }

namespace detail {

inline bool any_grad(std::initializer_list<Var> vars) {
  for (const Var& v : vars)
    if (v.needs_grad()) return true;
  return false;
}

inline void check(bool ok, const char* op) {
  require(ok, ErrorKind::InvalidArgument, std::string("shape mismatch in ") + op);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace detail

inline Var stop_gradient(const Var& a) { return a.tape()->constant(a.value()); }

inline Var matmul(const Var& a, const Var& b) {
  detail::check(a.cols() == b.rows(), "matmul");
  Tape* t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->make(a.value() * b.value(), detail::any_grad({a, b}), [t, ia, ib](const Matrix& g) {
    if (t->needs_grad(ia)) t->accumulate(ia, g * t->value(ib).transpose());
    if (t->needs_grad(ib)) t->accumulate(ib, t->value(ia).transpose() * g);
  });
}

/// Affine map x·W + b with b a 1×k row broadcast over the rows of x·W.
inline Var affine(const Var& x, const Var& w, const Var& b) {
  detail::check(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(), "affine");
  Tape* t = x.tape();
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t->make(std::move(out), detail::any_grad({x, w, b}), [t, ix, iw, ib](const Matrix& g) {
    if (t->needs_grad(ix)) t->accumulate(ix, g * t->value(iw).transpose());
    if (t->needs_grad(iw)) t->accumulate(iw, t->value(ix).transpose() * g);
    if (t->needs_grad(ib)) t->accumulate(ib, g.colwise().sum());
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape* t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->make(a.value() + b.value(), detail::any_grad({a, b}), [t, ia, ib](const Matrix& g) {
    t->accumulate(ia, g);
    t->accumulate(ib, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape* t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->make(a.value() - b.value(), detail::any_grad({a, b}), [t, ia, ib](const Matrix& g) {
    t->accumulate(ia, g);
    t->accumulate(ib, -g);
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard");
  Tape* t = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t->make(a.value().cwiseProduct(b.value()), detail::any_grad({a, b}),
                 [t, ia, ib](const Matrix& g) {
                   if (t->needs_grad(ia)) t->accumulate(ia, g.cwiseProduct(t->value(ib)));
                   if (t->needs_grad(ib)) t->accumulate(ib, g.cwiseProduct(t->value(ia)));
                 });
}

inline Var scale(const Var& a, double s) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  return t->make(a.value() * s, a.needs_grad(), [t, ia, s](const Matrix& g) { t->accumulate(ia, g * s); });
}

inline Var transpose(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  return t->make(a.value().transpose(), a.needs_grad(),
                 [t, ia](const Matrix& g) { t->accumulate(ia, g.transpose()); });
}

inline Var tanh(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  Matrix y = a.value().array().tanh().matrix();
  return t->make(y, a.needs_grad(), [t, ia, y](const Matrix& g) {
    t->accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var sigmoid(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  Matrix y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t->make(y, a.needs_grad(), [t, ia, y](const Matrix& g) {
    t->accumulate(ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

/// Exact GELU, x·Φ(x).
inline Var gelu(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  Matrix y = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * detail::kInvSqrt2)); });
  return t->make(std::move(y), a.needs_grad(), [t, ia](const Matrix& g) {
    Matrix d = t->value(ia).unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * detail::kInvSqrt2)) +
             x * detail::kInvSqrt2Pi * std::exp(-0.5 * x * x);
    });
    t->accumulate(ia, g.cwiseProduct(d));
  });
}

inline Matrix softmax_rows_value(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

inline Var softmax_rows(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  Matrix y = softmax_rows_value(a.value());
  return t->make(y, a.needs_grad(), [t, ia, y](const Matrix& g) {
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t->accumulate(ia, dx);
  });
}

/// Row-wise layer normalization followed by the affine gamma/beta (both 1×d).
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const Eigen::Index n = x.rows(), d = x.cols();
  detail::check(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
                "layer_norm_rows");
  Tape* t = x.tape();
  Matrix xhat(n, d);
  std::vector<double> inv_std(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = ((x.value().row(r).array() - mean) * inv_std[static_cast<std::size_t>(r)]).matrix();
  }
  Matrix y = xhat;
  for (Eigen::Index r = 0; r < n; ++r)
    y.row(r) = xhat.row(r).cwiseProduct(gamma.value().row(0)) + beta.value().row(0);
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t->make(std::move(y), detail::any_grad({x, gamma, beta}),
                 [t, ix, ig, ib, xhat, inv_std](const Matrix& g) {
                   if (t->needs_grad(ig)) t->accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                   if (t->needs_grad(ib)) t->accumulate(ib, g.colwise().sum());
                   if (!t->needs_grad(ix)) return;
                   const auto& gam = t->value(ig);
                   Matrix dx(g.rows(), g.cols());
                   for (Eigen::Index r = 0; r < g.rows(); ++r) {
                     Eigen::RowVectorXd gh = g.row(r).cwiseProduct(gam.row(0));
                     const double m1 = gh.mean();
                     const double m2 = gh.cwiseProduct(xhat.row(r)).mean();
                     dx.row(r) = (inv_std[static_cast<std::size_t>(r)] *
                                  (gh.array() - m1 - xhat.row(r).array() * m2))
                                     .matrix();
                   }
                   t->accumulate(ix, dx);
                 });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t->make(a.value().middleCols(start, count), a.needs_grad(),
                 [t, ia, start, count, rows, cols](const Matrix& g) {
                   Matrix full = Matrix::Zero(rows, cols);
                   full.middleCols(start, count) = g;
                   t->accumulate(ia, full);
                 });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::check(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return t->make(a.value().middleRows(start, count), a.needs_grad(),
                 [t, ia, start, count, rows, cols](const Matrix& g) {
                   Matrix full = Matrix::Zero(rows, cols);
                   full.middleRows(start, count) = g;
                   t->accumulate(ia, full);
                 });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat_cols of nothing");
  Tape* t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::check(p.rows() == rows, "concat_cols");
    cols += p.cols();
    grad = grad || p.needs_grad();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return t->make(std::move(out), grad, [t, spans](const Matrix& g) {
    for (const auto& [id, o] : spans) {
      if (t->needs_grad(id)) t->accumulate(id, g.middleCols(o, t->value(id).cols()));
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::InvalidArgument, "concat_rows of nothing");
  Tape* t = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (const Var& p : parts) {
    detail::check(p.cols() == cols, "concat_rows");
    rows += p.rows();
    grad = grad || p.needs_grad();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return t->make(std::move(out), grad, [t, spans](const Matrix& g) {
    for (const auto& [id, o] : spans) {
      if (t->needs_grad(id)) t->accumulate(id, g.middleRows(o, t->value(id).rows()));
    }
  });
}

/// Row i of `a` multiplied by weights(0, i); `weights` is 1×n.
inline Var scale_rows(const Var& a, const Var& weights) {
  detail::check(weights.rows() == 1 && weights.cols() == a.rows(), "scale_rows");
  Tape* t = a.tape();
  const std::size_t ia = a.id(), iw = weights.id();
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) *= weights.value()(0, r);
  return t->make(std::move(out), detail::any_grad({a, weights}), [t, ia, iw](const Matrix& g) {
    const Matrix& w = t->value(iw);
    const Matrix& x = t->value(ia);
    if (t->needs_grad(ia)) {
      Matrix dx = g;
      for (Eigen::Index r = 0; r < dx.rows(); ++r) dx.row(r) *= w(0, r);
      t->accumulate(ia, dx);
    }
    if (t->needs_grad(iw)) {
      Matrix dw(1, w.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) dw(0, r) = g.row(r).dot(x.row(r));
      t->accumulate(iw, dw);
    }
  });
}

/// Column means: n×d -> 1×d.
inline Var mean_rows(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const Eigen::Index n = a.rows();
  return t->make(a.value().colwise().mean(), a.needs_grad(), [t, ia, n](const Matrix& g) {
    Matrix dx = g.replicate(n, 1) / static_cast<double>(n);
    t->accumulate(ia, dx);
  });
}

inline Var sum(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t->make(std::move(out), a.needs_grad(),
                 [t, ia, r, c](const Matrix& g) { t->accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

inline Var sum_squares(const Var& a) {
  Tape* t = a.tape();
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return t->make(std::move(out), a.needs_grad(),
                 [t, ia](const Matrix& g) { t->accumulate(ia, 2.0 * g(0, 0) * t->value(ia)); });
}

/// Sum of scalar (1×1) vars with optional per-term weights.
inline Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  require(!terms.empty() && terms.size() == weights.size(), ErrorKind::InvalidArgument,
          "weighted_sum arity");
  Tape* t = terms.front().tape();
  double s = 0.0;
  bool grad = false;
  std::vector<std::pair<std::size_t, double>> items;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    detail::check(terms[i].rows() == 1 && terms[i].cols() == 1, "weighted_sum");
    s += weights[i] * terms[i].scalar();
    grad = grad || terms[i].needs_grad();
    items.emplace_back(terms[i].id(), weights[i]);
  }
  Matrix out(1, 1);
  out(0, 0) = s;
  return t->make(std::move(out), grad, [t, items](const Matrix& g) {
    for (const auto& [id, w] : items) t->accumulate(id, Matrix::Constant(1, 1, w * g(0, 0)));
  });
}

inline Var mean_of(const std::vector<Var>& terms) {
  return weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

}  // namespace ad
}  // namespace shazam
