#pragma once

// Dense reverse-mode autodiff over row-major Eigen matrices.
//
// Every value is a rank-2 array (vectors are 1xN or Nx1, scalars 1x1). A Tape
// records each primitive application together with a closure that pushes the
// output gradient back into its inputs. Nodes live in a deque so references
// stay valid while the tape grows.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dyg2vec/error.hpp"
#include "dyg2vec/rng.hpp"

namespace dyg {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

/// A named learnable array with its gradient accumulator.
template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

namespace ad {

enum class Mode { Train, Eval };

template <typename S>
class Tape;

/// Handle to a node on a Tape. Cheap to copy.
template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<S>& value() const;
  const Matrix<S>& grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  S item() const;

  Tape<S>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<S>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<S>&)>;

  struct Node {
    Matrix<S> value;
    Matrix<S> grad;  // empty until something flows into it
    bool requires_grad = false;
    Parameter<S>* param = nullptr;
    std::vector<std::size_t> inputs;
    Backward backward;
    std::string_view op;
  };

  explicit Tape(Mode mode = Mode::Train) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::Train; }

  Var<S> constant(Matrix<S> value) { return push("constant", std::move(value), false); }

  /// A free leaf that collects a gradient but is not tied to a Parameter.
  Var<S> leaf(Matrix<S> value) { return push("leaf", std::move(value), true); }

  /// Brings a parameter onto the tape. With trainable=false the value enters as a
  /// constant and no gradient is ever produced for it.
  Var<S> param(Parameter<S>& p, bool trainable = true) {
    Var<S> v = push("param", p.value, trainable);
    if (trainable) nodes_.back().param = &p;
    return v;
  }

  /// Records a primitive. requires_grad is inherited from the inputs; the
  /// backward closure is kept only when it is needed.
  Var<S> record(std::string_view op, Matrix<S> value, std::initializer_list<Var<S>> inputs,
                Backward backward) {
    return record(op, std::move(value), std::vector<Var<S>>(inputs), std::move(backward));
  }

  Var<S> record(std::string_view op, Matrix<S> value, const std::vector<Var<S>>& inputs,
                Backward backward) {
#ifndef NDEBUG
    if (!value.allFinite()) {
      bool finite_inputs = true;
      for (const auto& in : inputs) finite_inputs = finite_inputs && in.value().allFinite();
      if (finite_inputs) throw NumericError(std::string(op) + ": non-finite output");
    }
#endif
    bool rg = false;
    for (const auto& in : inputs) rg = rg || node(in.id()).requires_grad;
    Var<S> out = push(op, std::move(value), rg);
    if (rg) {
      Node& n = nodes_.back();
      n.inputs.reserve(inputs.size());
      for (const auto& in : inputs) n.inputs.push_back(in.id());
      n.backward = std::move(backward);
    }
    return out;
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  bool needs_grad(const Var<S>& v) const { return nodes_[v.id()].requires_grad; }

  /// Adds `delta` into the gradient of v (no-op for constants).
  template <typename Derived>
  void accumulate(const Var<S>& v, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Reverse sweep from a scalar loss. Parameter leaves add their gradient into
  /// Parameter::grad; free leaves keep it on the node.
  void backward(const Var<S>& loss) {
    const Node& l = nodes_.at(loss.id());
    if (l.value.rows() != 1 || l.value.cols() != 1) {
      std::ostringstream os;
      os << "backward: loss must be scalar, got " << l.value.rows() << "x" << l.value.cols();
      throw ContractError(os.str());
    }
    if (!l.requires_grad) return;
    nodes_[loss.id()].grad = Matrix<S>::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) {
        if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols())
          n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

 private:
  Var<S> push(std::string_view op, Matrix<S> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<S>(this, nodes_.size() - 1);
  }

  Mode mode_;
  std::deque<Node> nodes_;
};

template <typename S>
const Matrix<S>& Var<S>::value() const {
  return tape_->node(id_).value;
}
template <typename S>
const Matrix<S>& Var<S>::grad() const {
  return tape_->node(id_).grad;
}
template <typename S>
bool Var<S>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}
template <typename S>
S Var<S>::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ContractError("item: tensor is not 1x1");
  return v(0, 0);
}

namespace detail {

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename S>
[[noreturn]] void shape_fail(std::string_view op, const Var<S>& a, const Var<S>& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a.rows(), a.cols()) + " and " + shape_str(b.rows(), b.cols()));
}

template <typename S>
[[noreturn]] void shape_fail(std::string_view op, const Var<S>& a, const std::string& why) {
  throw DimensionError(std::string(op) + ": shape " + shape_str(a.rows(), a.cols()) + " " + why);
}

enum class Broadcast { Same, Row, Scalar };

template <typename S>
Broadcast broadcast_kind(std::string_view op, const Var<S>& a, const Var<S>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  shape_fail(op, a, b);
}

template <typename S>
Matrix<S> reduce_to(const Matrix<S>& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::Row:
      return g.colwise().sum();
    case Broadcast::Scalar:
      return Matrix<S>::Constant(1, 1, g.sum());
    default:
      return g;
  }
}

template <typename S>
void check_segments(std::string_view op, Index rows, std::span<const int> seg, Index count) {
  if (static_cast<Index>(seg.size()) != rows)
    throw DimensionError(std::string(op) + ": segment ids length " + std::to_string(seg.size()) +
                         " does not match " + std::to_string(rows) + " rows");
  for (int s : seg)
    if (s < 0 || s >= count)
      throw DimensionError(std::string(op) + ": segment id " + std::to_string(s) +
                           " out of range [0," + std::to_string(count) + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a, b);
  Matrix<S> out = a.value() * b.value();
  return a.tape()->record("matmul", std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

template <typename S>
Var<S> transpose(const Var<S>& a) {
  Matrix<S> out = a.value().transpose();
  return a.tape()->record("transpose", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.transpose());
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic. The right operand may broadcast as a 1xC row or 1x1.
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  const auto kind = detail::broadcast_kind("add", a, b);
  Matrix<S> out;
  switch (kind) {
    case detail::Broadcast::Same: out = a.value() + b.value(); break;
    case detail::Broadcast::Row: out = a.value().rowwise() + b.value().row(0); break;
    case detail::Broadcast::Scalar: out = a.value().array() + b.value()(0, 0); break;
  }
  return a.tape()->record("add", std::move(out), {a, b}, [a, b, kind](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, detail::reduce_to<S>(g, kind));
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  const auto kind = detail::broadcast_kind("sub", a, b);
  Matrix<S> out;
  switch (kind) {
    case detail::Broadcast::Same: out = a.value() - b.value(); break;
    case detail::Broadcast::Row: out = a.value().rowwise() - b.value().row(0); break;
    case detail::Broadcast::Scalar: out = a.value().array() - b.value()(0, 0); break;
  }
  return a.tape()->record("sub", std::move(out), {a, b}, [a, b, kind](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -detail::reduce_to<S>(g, kind));
  });
}

/// Hadamard product of equally shaped operands.
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("mul", a, b);
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.tape()->record("mul", std::move(out), {a, b}, [a, b](Tape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Matrix<S> out = a.value() * factor;
  return a.tape()->record("scale", std::move(out), {a}, [a, factor](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g * factor);
  });
}

/// a + c for a constant scalar c.
template <typename S>
Var<S> shift(const Var<S>& a, S c) {
  Matrix<S> out = a.value().array() + c;
  return a.tape()->record("shift", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
  });
}

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S>
Var<S> operator*(S s, const Var<S>& a) { return scale(a, s); }
template <typename S>
Var<S> operator*(const Var<S>& a, S s) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Var<S> relu(const Var<S>& a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return a.tape()->record("relu", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (a.value().array() > S(0)).select(g, S(0)).matrix());
  });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  Matrix<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  Tape<S>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("sigmoid", std::move(out), {a}, [a, out_id](Tape<S>& t, const Matrix<S>& g) {
    const auto& y = t.node(out_id).value.array();
    t.accumulate(a, (g.array() * y * (S(1) - y)).matrix());
  });
}

template <typename S>
Var<S> sin(const Var<S>& a) {
  Matrix<S> out = a.value().array().sin().matrix();
  return a.tape()->record("sin", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (g.array() * a.value().array().cos()).matrix());
  });
}

/// Elementwise square root; inputs must be positive.
template <typename S>
Var<S> sqrt(const Var<S>& a) {
  if ((a.value().array() < S(0)).any()) detail::shape_fail("sqrt", a, "has negative entries");
  Matrix<S> out = a.value().array().sqrt().matrix();
  Tape<S>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("sqrt", std::move(out), {a}, [a, out_id](Tape<S>& t, const Matrix<S>& g) {
    const auto& y = t.node(out_id).value.array();
    t.accumulate(a, (g.array() / (S(2) * y)).matrix());
  });
}

/// Row-wise softmax with max subtraction.
template <typename S>
Var<S> softmax_rows(const Var<S>& a) {
  Matrix<S> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const auto row = a.value().row(r);
    const S m = row.maxCoeff();
    out.row(r) = (row.array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Tape<S>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("softmax_rows", std::move(out), {a}, [a, out_id](Tape<S>& t, const Matrix<S>& g) {
    const Matrix<S>& y = t.node(out_id).value;
    Matrix<S> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<S> d = y.cwiseProduct(g - dot.replicate(1, y.cols()));
    t.accumulate(a, d);
  });
}

/// Softmax over groups of rows. Column j of rows sharing a segment id are
/// normalized together, so an (edges x heads) logit matrix becomes per-anchor,
/// per-head attention weights.
template <typename S>
Var<S> segment_softmax(const Var<S>& a, std::span<const int> segments, Index num_segments) {
  detail::check_segments<S>("segment_softmax", a.rows(), segments, num_segments);
  const Index cols = a.cols();
  Matrix<S> mx = Matrix<S>::Constant(num_segments, cols, -std::numeric_limits<S>::infinity());
  for (Index r = 0; r < a.rows(); ++r) mx.row(segments[r]) = mx.row(segments[r]).cwiseMax(a.value().row(r));
  Matrix<S> out(a.rows(), cols);
  Matrix<S> denom = Matrix<S>::Zero(num_segments, cols);
  for (Index r = 0; r < a.rows(); ++r) {
    out.row(r) = (a.value().row(r) - mx.row(segments[r])).array().exp().matrix();
    denom.row(segments[r]) += out.row(r);
  }
  for (Index r = 0; r < a.rows(); ++r) out.row(r) = out.row(r).cwiseQuotient(denom.row(segments[r]));
  std::vector<int> seg(segments.begin(), segments.end());
  Tape<S>* tape = a.tape();
  const std::size_t out_id = tape->size();
  return tape->record("segment_softmax", std::move(out), {a},
                      [a, out_id, seg = std::move(seg), num_segments](Tape<S>& t, const Matrix<S>& g) {
                        const Matrix<S>& y = t.node(out_id).value;
                        Matrix<S> dot = Matrix<S>::Zero(num_segments, y.cols());
                        for (Index r = 0; r < y.rows(); ++r) dot.row(seg[r]) += g.row(r).cwiseProduct(y.row(r));
                        Matrix<S> d(y.rows(), y.cols());
                        for (Index r = 0; r < y.rows(); ++r)
                          d.row(r) = y.row(r).cwiseProduct(g.row(r) - dot.row(seg[r]));
                        t.accumulate(a, d);
                      });
}

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity in eval mode.
template <typename S>
Var<S> dropout(const Var<S>& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must lie in [0,1)");
  if (!a.tape()->training() || p == 0.0) return a;
  Matrix<S> mask(a.rows(), a.cols());
  const S keep_scale = S(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < p ? S(0) : keep_scale;
  Matrix<S> out = a.value().cwiseProduct(mask);
  return a.tape()->record("dropout", std::move(out), {a},
                          [a, mask = std::move(mask)](Tape<S>& t, const Matrix<S>& g) {
                            t.accumulate(a, g.cwiseProduct(mask));
                          });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sum(const Var<S>& a) {
  Matrix<S> out = Matrix<S>::Constant(1, 1, a.value().sum());
  return a.tape()->record("sum", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, Matrix<S>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  if (a.value().size() == 0) detail::shape_fail("mean", a, "is empty");
  const S n = static_cast<S>(a.value().size());
  Matrix<S> out = Matrix<S>::Constant(1, 1, a.value().sum() / n);
  return a.tape()->record("mean", std::move(out), {a}, [a, n](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, Matrix<S>::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

/// Column means, 1xC.
template <typename S>
Var<S> col_mean(const Var<S>& a) {
  if (a.rows() == 0) detail::shape_fail("col_mean", a, "has no rows");
  const S n = static_cast<S>(a.rows());
  Matrix<S> out = a.value().colwise().sum() / n;
  return a.tape()->record("col_mean", std::move(out), {a}, [a, n](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (g / n).replicate(a.rows(), 1));
  });
}

/// Row sums, Rx1.
template <typename S>
Var<S> row_sum(const Var<S>& a) {
  Matrix<S> out = a.value().rowwise().sum();
  return a.tape()->record("row_sum", std::move(out), {a}, [a](Tape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

/// Sums consecutive column blocks of width `block`: RxC -> Rx(C/block).
template <typename S>
Var<S> block_row_sum(const Var<S>& a, Index block) {
  if (block <= 0 || a.cols() % block != 0)
    detail::shape_fail("block_row_sum", a, "is not divisible into blocks of " + std::to_string(block));
  const Index nb = a.cols() / block;
  Matrix<S> out(a.rows(), nb);
  for (Index b = 0; b < nb; ++b) out.col(b) = a.value().middleCols(b * block, block).rowwise().sum();
  return a.tape()->record("block_row_sum", std::move(out), {a}, [a, block, nb](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d(a.rows(), a.cols());
    for (Index b = 0; b < nb; ++b) d.middleCols(b * block, block) = g.col(b).replicate(1, block);
    t.accumulate(a, d);
  });
}

/// Scales each column block b of `a` (RxC) by column b of `w` (Rx(C/block)).
template <typename S>
Var<S> scale_blocks(const Var<S>& a, const Var<S>& w) {
  if (w.rows() != a.rows() || w.cols() == 0 || a.cols() % w.cols() != 0) detail::shape_fail("scale_blocks", a, w);
  const Index nb = w.cols();
  const Index block = a.cols() / nb;
  Matrix<S> out(a.rows(), a.cols());
  for (Index b = 0; b < nb; ++b)
    out.middleCols(b * block, block) = a.value().middleCols(b * block, block).array().colwise() * w.value().col(b).array();
  return a.tape()->record("scale_blocks", std::move(out), {a, w}, [a, w, nb, block](Tape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(a)) {
      Matrix<S> d(a.rows(), a.cols());
      for (Index b = 0; b < nb; ++b)
        d.middleCols(b * block, block) = g.middleCols(b * block, block).array().colwise() * w.value().col(b).array();
      t.accumulate(a, d);
    }
    if (t.needs_grad(w)) {
      Matrix<S> d(w.rows(), nb);
      for (Index b = 0; b < nb; ++b)
        d.col(b) = g.middleCols(b * block, block).cwiseProduct(a.value().middleCols(b * block, block)).rowwise().sum();
      t.accumulate(w, d);
    }
  });
}

// ---------------------------------------------------------------------------
// Structural primitives
// ---------------------------------------------------------------------------

/// Concatenation along the last dimension (columns). Zero-width parts are allowed.
template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) detail::shape_fail("concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    if (p.cols() > 0) out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return parts.front().tape()->record("concat_cols", std::move(out), parts,
                                      [parts, offsets](Tape<S>& t, const Matrix<S>& g) {
                                        for (std::size_t i = 0; i < parts.size(); ++i)
                                          if (parts[i].cols() > 0 && t.needs_grad(parts[i]))
                                            t.accumulate(parts[i], g.middleCols(offsets[i], parts[i].cols()));
                                      });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) detail::shape_fail("concat_rows", parts.front(), p);
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    if (p.rows() > 0) out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return parts.front().tape()->record("concat_rows", std::move(out), parts,
                                      [parts, offsets](Tape<S>& t, const Matrix<S>& g) {
                                        for (std::size_t i = 0; i < parts.size(); ++i)
                                          if (parts[i].rows() > 0 && t.needs_grad(parts[i]))
                                            t.accumulate(parts[i], g.middleRows(offsets[i], parts[i].rows()));
                                      });
}

template <typename S>
Var<S> slice_rows(const Var<S>& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    detail::shape_fail("slice_rows", a, "cannot take rows [" + std::to_string(begin) + "," +
                                            std::to_string(begin + count) + ")");
  Matrix<S> out = a.value().middleRows(begin, count);
  return a.tape()->record("slice_rows", std::move(out), {a}, [a, begin, count](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d = Matrix<S>::Zero(a.rows(), a.cols());
    d.middleRows(begin, count) = g;
    t.accumulate(a, d);
  });
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    detail::shape_fail("slice_cols", a, "cannot take cols [" + std::to_string(begin) + "," +
                                            std::to_string(begin + count) + ")");
  Matrix<S> out = a.value().middleCols(begin, count);
  return a.tape()->record("slice_cols", std::move(out), {a}, [a, begin, count](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d = Matrix<S>::Zero(a.rows(), a.cols());
    d.middleCols(begin, count) = g;
    t.accumulate(a, d);
  });
}

/// Row gather (embedding lookup): out.row(i) = a.row(index[i]).
template <typename S>
Var<S> gather_rows(const Var<S>& a, std::span<const int> index) {
  Matrix<S> out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows())
      detail::shape_fail("gather_rows", a, "has no row " + std::to_string(index[i]));
    out.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->record("gather_rows", std::move(out), {a}, [a, idx = std::move(idx)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d = Matrix<S>::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, d);
  });
}

/// Segment sum (scatter-add of rows): out.row(s) = sum of a.row(r) with segments[r] == s.
/// Segments that receive no rows are zero.
template <typename S>
Var<S> segment_sum(const Var<S>& a, std::span<const int> segments, Index num_segments) {
  detail::check_segments<S>("segment_sum", a.rows(), segments, num_segments);
  Matrix<S> out = Matrix<S>::Zero(num_segments, a.cols());
  for (Index r = 0; r < a.rows(); ++r) out.row(segments[r]) += a.value().row(r);
  std::vector<int> seg(segments.begin(), segments.end());
  return a.tape()->record("segment_sum", std::move(out), {a}, [a, seg = std::move(seg)](Tape<S>& t, const Matrix<S>& g) {
    Matrix<S> d(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) d.row(r) = g.row(seg[r]);
    t.accumulate(a, d);
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy on logits (Nx1), in the log-sum-exp stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)).
template <typename S>
Var<S> bce_with_logits(const Var<S>& logits, std::span<const S> labels) {
  if (logits.cols() != 1 || logits.rows() != static_cast<Index>(labels.size()))
    detail::shape_fail("bce_with_logits", logits, "does not match " + std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw ContractError("bce_with_logits: empty batch");
  const Index n = logits.rows();
  S total = 0;
  for (Index i = 0; i < n; ++i) {
    const S z = logits.value()(i, 0);
    const S y = labels[i];
    if (y != S(0) && y != S(1)) throw ContractError("bce_with_logits: labels must be 0 or 1");
    total += std::max(z, S(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix<S> out = Matrix<S>::Constant(1, 1, total / static_cast<S>(n));
  std::vector<S> y(labels.begin(), labels.end());
  return logits.tape()->record("bce_with_logits", std::move(out), {logits},
                               [logits, y = std::move(y)](Tape<S>& t, const Matrix<S>& g) {
                                 const Index n = logits.rows();
                                 Matrix<S> d(n, 1);
                                 for (Index i = 0; i < n; ++i) {
                                   const S z = logits.value()(i, 0);
                                   const S s = z >= 0 ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
                                   d(i, 0) = (s - y[i]) * g(0, 0) / static_cast<S>(n);
                                 }
                                 t.accumulate(logits, d);
                               });
}

}  // namespace ad
}  // namespace dyg
