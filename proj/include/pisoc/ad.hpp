#pragma once

// Reverse-mode automatic differentiation on batched matrices.
//
// Values are Eigen matrices laid out [batch x features]. Every operation has
// two overloads with the same name: one on plain `Matrix` (inference, no
// recording) and one on `Var` (recorded on a Tape). Model code is written once
// as a template over the value type and runs in either mode.

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace pisoc::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only computation record. Parents always precede children, so a
// reverse sweep over node order is a valid topological backward pass.
class Tape {
 public:
  // Receives the node's accumulated gradient and its own forward value.
  using Backward = std::function<void(Tape&, const Matrix& grad, const Matrix& value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  const Matrix& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  template <typename Expr>
  void accumulate(const Var& target, const Expr& g) {
    Node& node = nodes_[target.id()];
    if (!node.requires_grad) return;
    if (!node.has_grad) {
      node.grad = g;
      node.has_grad = true;
    } else {
      node.grad += g;
    }
  }

  // Gradient of the last backward() target with respect to `v`; zeros for
  // nodes the target does not depend on.
  Matrix grad(const Var& v) const;

  void backward(const Var& loss);
  void backward(const Var& output, const Matrix& seed);
  void zero_grad();
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// ---- elementwise binary -------------------------------------------------
Matrix add(const Matrix& a, const Matrix& b);
Var add(const Var& a, const Var& b);
Var add(const Var& a, const Matrix& b);
Var add(const Matrix& a, const Var& b);

Matrix sub(const Matrix& a, const Matrix& b);
Var sub(const Var& a, const Var& b);
Var sub(const Var& a, const Matrix& b);
Var sub(const Matrix& a, const Var& b);

Matrix mul(const Matrix& a, const Matrix& b);
Var mul(const Var& a, const Var& b);
Var mul(const Var& a, const Matrix& b);
Var mul(const Matrix& a, const Var& b);

// a[B x c] * col[B x 1], broadcast along columns.
Matrix mul_col(const Matrix& a, const Matrix& col);
Var mul_col(const Var& a, const Var& col);
Var mul_col(const Var& a, const Matrix& col);

// a[B x c] + row[1 x c], broadcast along rows.
Matrix add_row(const Matrix& a, const Matrix& row);
Var add_row(const Var& a, const Var& row);

// ---- scalar --------------------------------------------------------------
Matrix scale(const Matrix& a, double s);
Var scale(const Var& a, double s);
Matrix shift(const Matrix& a, double s);
Var shift(const Var& a, double s);

// ---- elementwise unary ---------------------------------------------------
Matrix tanh(const Matrix& a);
Var tanh(const Var& a);
Matrix sigmoid(const Matrix& a);
Var sigmoid(const Var& a);
Matrix sin(const Matrix& a);
Var sin(const Var& a);
Matrix cos(const Matrix& a);
Var cos(const Var& a);
Matrix exp(const Matrix& a);
Var exp(const Var& a);
Matrix log(const Matrix& a);
Var log(const Var& a);
Matrix square(const Matrix& a);
Var square(const Var& a);
Matrix sqrt(const Matrix& a);
Var sqrt(const Var& a);
Matrix reciprocal(const Matrix& a);
Var reciprocal(const Var& a);
// max(a, floor); the gradient is zero where the floor is active.
Matrix clamp_min(const Matrix& a, double floor);
Var clamp_min(const Var& a, double floor);
// Reduction of angles to [-pi, pi). Piecewise identity, so the gradient passes
// straight through.
Matrix wrap_angle(const Matrix& a);
Var wrap_angle(const Var& a);

// ---- linear algebra / shape ------------------------------------------------
Matrix matmul(const Matrix& a, const Matrix& b);
Var matmul(const Var& a, const Var& b);
// x * W + 1 * b^T with b stored as [1 x out].
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b);
Var affine(const Var& x, const Var& w, const Var& b);

Matrix sum_cols(const Matrix& a);  // [B x c] -> [B x 1]
Var sum_cols(const Var& a);
Matrix sum_all(const Matrix& a);   // -> [1 x 1]
Var sum_all(const Var& a);
Matrix mean_all(const Matrix& a);
Var mean_all(const Var& a);

Matrix slice_cols(const Matrix& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Matrix concat_cols(std::span<const Matrix> parts);
Var concat_cols(std::span<const Var> parts);

// [B x 1] -> [B/group x 1], mean over consecutive rows.
Matrix group_mean(const Matrix& a, Eigen::Index group);
Var group_mean(const Var& a, Eigen::Index group);

// log(mean(exp(a))) over every entry -> [1 x 1], max-shifted.
Matrix logmeanexp(const Matrix& a);
Var logmeanexp(const Var& a);

// Fused LSTM cell. `state` is [B x 2H] = [h | c]; pass an empty matrix / an
// invalid Var for a zero initial state. Gates are ordered (input, forget,
// cell, output) along the 4H columns of W [F x 4H], U [H x 4H], b [1 x 4H].
Matrix lstm_cell(const Matrix& x, const Matrix& state, const Matrix& w, const Matrix& u,
                 const Matrix& b);
Var lstm_cell(const Var& x, const Var& state, const Var& w, const Var& u, const Var& b);

// Lift a constant into the value domain of T. Needed by templated model code.
inline const Matrix& lift(const Matrix& m, const Matrix&) { return m; }
Var lift(const Matrix& m, const Var& like);

}  // namespace pisoc::ad
