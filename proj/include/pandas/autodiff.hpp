#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pandas/error.hpp"

namespace pandas::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A learnable tensor (rank 1 or 2) with its gradient and Adam moments.
struct Parameter {
  std::vector<int> shape;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  bool hasGrad = false;

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
    hasGrad = false;
  }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep visits every
/// node after all of its consumers. Not thread-safe; use one tape per pass.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool requiresGrad = false;
    bool gradTouched = false;
    Backward backward;
  };

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a parameter: backward accumulates into `p.grad`.
  Var param(Parameter& p) {
    Parameter* ptr = &p;
    return push(p.value, true, [ptr](Tape& t, int self) {
      auto& node = t.nodes_[self];
      if (ptr->grad.rows() != node.value.rows() || ptr->grad.cols() != node.value.cols())
        ptr->grad.setZero(node.value.rows(), node.value.cols());
      ptr->grad += node.grad;
      ptr->hasGrad = true;
    });
  }

  /// Result node of an op. `backward` is only stored when some input needs a gradient.
  Var push(Matrix value, bool requiresGrad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requiresGrad = requiresGrad;
    if (requiresGrad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Node& node(int id) const { return nodes_[id]; }

  /// Gradient buffer of `id` for accumulation; allocated on first use.
  Matrix& grad_of(int id) {
    Node& n = nodes_[id];
    if (!n.gradTouched) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      n.gradTouched = true;
    }
    return n.grad;
  }

  bool needs(const Var& v) const { return nodes_[v.id()].requiresGrad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps in reverse.
  void backward(const Var& out) {
    if (out.rows() != 1 || out.cols() != 1) throw Error(ErrorKind::Shape, "backward: output must be scalar");
    grad_of(out.id())(0, 0) += 1.0;
    backward_from(out.id());
  }

  /// Reverse sweep with a caller-provided seed gradient (same shape as `out`).
  void backward(const Var& out, const Matrix& seed) {
    grad_of(out.id()) += seed;
    backward_from(out.id());
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  void backward_from(int last) {
    for (int i = last; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requiresGrad && n.gradTouched && n.backward) n.backward(*this, i);
    }
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->node(id_).value; }
inline const Matrix& Var::grad() const { return tape_->node(id_).grad; }
inline bool Var::requires_grad() const { return tape_->node(id_).requiresGrad; }

namespace detail {

inline void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw Error(ErrorKind::Shape, "operands live on different tapes");
}

inline std::string dims(const Var& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw Error(ErrorKind::Shape, "matmul: " + detail::dims(a) + " * " + detail::dims(b));
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), t.needs(a) || t.needs(b), [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requiresGrad) t.grad_of(ia).noalias() += g * t.node(ib).value.transpose();
    if (t.node(ib).requiresGrad) t.grad_of(ib).noalias() += t.node(ia).value.transpose() * g;
  });
}

/// a + b, where b is either the same shape as a or a 1 x cols row broadcast over rows.
inline Var add(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  Tape& t = *a.tape();
  const bool broadcast = b.rows() == 1 && a.rows() != 1;
  if (a.cols() != b.cols() || (!broadcast && a.rows() != b.rows()))
    throw Error(ErrorKind::Shape, "add: " + detail::dims(a) + " + " + detail::dims(b));
  Matrix out = a.value();
  if (broadcast)
    out.rowwise() += b.value().row(0);
  else
    out += b.value();
  return t.push(std::move(out), t.needs(a) || t.needs(b), [ia = a.id(), ib = b.id(), broadcast](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requiresGrad) t.grad_of(ia) += g;
    if (t.node(ib).requiresGrad) {
      if (broadcast)
        t.grad_of(ib) += g.colwise().sum();
      else
        t.grad_of(ib) += g;
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, t.needs(a), [ia = a.id(), s](Tape& t, int self) { t.grad_of(ia) += s * t.node(self).grad; });
}

inline Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

/// a + C for a constant C of the same shape (or a 1 x cols row broadcast).
inline Var add_constant(const Var& a, const Matrix& c) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  if (c.rows() == 1 && out.rows() != 1)
    out.rowwise() += c.row(0);
  else if (c.rows() == out.rows() && c.cols() == out.cols())
    out += c;
  else
    throw Error(ErrorKind::Shape, "add_constant: shape mismatch");
  return t.push(std::move(out), t.needs(a), [ia = a.id()](Tape& t, int self) { t.grad_of(ia) += t.node(self).grad; });
}

inline Var concat_cols(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.rows() != b.rows()) throw Error(ErrorKind::Shape, "concat: " + detail::dims(a) + " | " + detail::dims(b));
  Tape& t = *a.tape();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  return t.push(std::move(out), t.needs(a) || t.needs(b), [ia = a.id(), ib = b.id(), ca, cb](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requiresGrad) t.grad_of(ia) += g.leftCols(ca);
    if (t.node(ib).requiresGrad) t.grad_of(ib) += g.rightCols(cb);
  });
}

inline Var tanh(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh().matrix();
  return t.push(std::move(out), t.needs(a), [ia = a.id()](Tape& t, int self) {
    const auto& y = t.node(self).value.array();
    t.grad_of(ia).array() += t.node(self).grad.array() * (1.0 - y * y);
  });
}

inline Var relu(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.push(std::move(out), t.needs(a), [ia = a.id()](Tape& t, int self) {
    const auto& x = t.node(ia).value.array();
    t.grad_of(ia).array() += (x > 0.0).select(t.node(self).grad.array(), 0.0);
  });
}

/// Scales row i of a by w[i].
inline Var row_scale(const Var& a, const Eigen::VectorXd& w) {
  if (w.size() != a.rows()) throw Error(ErrorKind::Shape, "row_scale: weight length mismatch");
  Tape& t = *a.tape();
  Matrix out = w.asDiagonal() * a.value();
  return t.push(std::move(out), t.needs(a), [ia = a.id(), w](Tape& t, int self) {
    t.grad_of(ia).noalias() += w.asDiagonal() * t.node(self).grad;
  });
}

inline Var sum(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs(a), [ia = a.id()](Tape& t, int self) {
    t.grad_of(ia).array() += t.node(self).grad(0, 0);
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Elementwise product of two same-shape tensors.
inline Var mul(const Var& a, const Var& b) {
  detail::check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorKind::Shape, "mul: shape mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), t.needs(a) || t.needs(b), [ia = a.id(), ib = b.id()](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requiresGrad) t.grad_of(ia) += g.cwiseProduct(t.node(ib).value);
    if (t.node(ib).requiresGrad) t.grad_of(ib) += g.cwiseProduct(t.node(ia).value);
  });
}

/// Row-major reshape: data order is preserved.
inline Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw Error(ErrorKind::Shape, "reshape: size mismatch");
  Tape& t = *a.tape();
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return t.push(std::move(out), t.needs(a), [ia = a.id(), r0, c0](Tape& t, int self) {
    t.grad_of(ia) += Eigen::Map<const Matrix>(t.node(self).grad.data(), r0, c0);
  });
}

/// C * a with a constant dense C.
inline Var const_matmul(const Matrix& c, const Var& a) {
  if (c.cols() != a.rows()) throw Error(ErrorKind::Shape, "const_matmul: shape mismatch");
  Tape& t = *a.tape();
  Matrix out = c * a.value();
  return t.push(std::move(out), t.needs(a), [ia = a.id(), c](Tape& t, int self) {
    t.grad_of(ia).noalias() += c.transpose() * t.node(self).grad;
  });
}

/// S * a with a constant sparse S. `owner` keeps S alive for the tape's lifetime.
inline Var sparse_matmul(const Eigen::SparseMatrix<double>& s, const Var& a, std::shared_ptr<const void> owner = {}) {
  if (s.cols() != a.rows()) throw Error(ErrorKind::Shape, "sparse_matmul: shape mismatch");
  Tape& t = *a.tape();
  Matrix out = s * a.value();
  const auto* sp = &s;
  return t.push(std::move(out), t.needs(a), [ia = a.id(), sp, owner](Tape& t, int self) {
    t.grad_of(ia) += sp->transpose() * t.node(self).grad;
  });
}

/// Mean over rows of |a_i - target_i|^2, i.e. (1/n) * sum of squared row distances.
inline Var mean_squared_rows(const Var& a, const Matrix& target) {
  if (a.rows() != target.rows() || a.cols() != target.cols())
    throw Error(ErrorKind::Shape, "mean_squared_rows: shape mismatch");
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.rows());
  Matrix diff = a.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return t.push(std::move(out), t.needs(a), [ia = a.id(), diff = std::move(diff), n](Tape& t, int self) {
    t.grad_of(ia) += (2.0 * t.node(self).grad(0, 0) / n) * diff;
  });
}

}  // namespace pandas::ad
