#include "pisoc/ad.hpp"

#include <cassert>
#include <cmath>
#include <memory>
#include <numbers>

namespace pisoc::ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    assert(p.tape() == this);
    needs = needs || nodes_[p.id()].requires_grad;
  }
  if (!needs) backward = {};
  nodes_.push_back(Node{std::move(value), Matrix(), needs, false, std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Matrix Tape::grad(const Var& v) const {
  const Node& node = nodes_[v.id()];
  if (!node.has_grad) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
}

void Tape::backward(const Var& loss) {
  assert(value(loss).size() == 1);
  backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(const Var& output, const Matrix& seed) {
  zero_grad();
  accumulate(output, seed);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.has_grad && node.backward) node.backward(*this, node.grad, node.value);
  }
}

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

// Column-block accumulation without materialising a zero-padded matrix.
void accumulate_cols(Tape& t, const Var& target, Eigen::Index start, const Matrix& g) {
  if (!t.requires_grad(target)) return;
  Matrix full = Matrix::Zero(target.rows(), target.cols());
  full.middleCols(start, g.cols()) = g;
  t.accumulate(target, full);
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dydx) {
  Matrix y = f(a.value());
  return tape_of(a).record(std::move(y), {a},
                           [a, dydx](Tape& t, const Matrix& g, const Matrix& out) {
                             t.accumulate(a, dydx(a.value(), out).cwiseProduct(g));
                           });
}

}  // namespace

// ---- binary ----------------------------------------------------------------

Matrix add(const Matrix& a, const Matrix& b) { return a + b; }
Var add(const Var& a, const Var& b) {
  return tape_of(a).record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}
Var add(const Var& a, const Matrix& b) {
  return tape_of(a).record(a.value() + b, {a},
                           [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}
Var add(const Matrix& a, const Var& b) { return add(b, a); }

Matrix sub(const Matrix& a, const Matrix& b) { return a - b; }
Var sub(const Var& a, const Var& b) {
  return tape_of(a).record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}
Var sub(const Var& a, const Matrix& b) {
  return tape_of(a).record(a.value() - b, {a},
                           [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}
Var sub(const Matrix& a, const Var& b) {
  return tape_of(b).record(a - b.value(), {b},
                           [b](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(b, -g); });
}

Matrix mul(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b); }
Var mul(const Var& a, const Var& b) {
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                           [a, b](Tape& t, const Matrix& g, const Matrix&) {
                             t.accumulate(a, g.cwiseProduct(b.value()));
                             t.accumulate(b, g.cwiseProduct(a.value()));
                           });
}
Var mul(const Var& a, const Matrix& b) {
  return tape_of(a).record(a.value().cwiseProduct(b), {a},
                           [a, b](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g.cwiseProduct(b)); });
}
Var mul(const Matrix& a, const Var& b) { return mul(b, a); }

Matrix mul_col(const Matrix& a, const Matrix& col) {
  return (a.array().colwise() * col.col(0).array()).matrix();
}
Var mul_col(const Var& a, const Var& col) {
  return tape_of(a).record(mul_col(a.value(), col.value()), {a, col},
                           [a, col](Tape& t, const Matrix& g, const Matrix&) {
                             t.accumulate(a, mul_col(g, col.value()));
                             t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
                           });
}
Var mul_col(const Var& a, const Matrix& col) {
  return tape_of(a).record(mul_col(a.value(), col), {a}, [a, col](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, mul_col(g, col));
  });
}

Matrix add_row(const Matrix& a, const Matrix& row) { return a.rowwise() + row.row(0); }
Var add_row(const Var& a, const Var& row) {
  return tape_of(a).record(add_row(a.value(), row.value()), {a, row},
                           [a, row](Tape& t, const Matrix& g, const Matrix&) {
                             t.accumulate(a, g);
                             t.accumulate(row, g.colwise().sum());
                           });
}

// ---- scalar ----------------------------------------------------------------

Matrix scale(const Matrix& a, double s) { return a * s; }
Var scale(const Var& a, double s) {
  return tape_of(a).record(a.value() * s, {a},
                           [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g * s); });
}
Matrix shift(const Matrix& a, double s) { return (a.array() + s).matrix(); }
Var shift(const Var& a, double s) {
  return tape_of(a).record(shift(a.value(), s), {a},
                           [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

// ---- unary -----------------------------------------------------------------

// Through exp, which Eigen vectorizes for doubles; its own tanh does not.
static Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& a) { return 1.0 - 2.0 / (1.0 + (2.0 * a).exp()); }

Matrix tanh(const Matrix& a) { return tanh_array(a.array()).matrix(); }
Var tanh(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return tanh(x); },
      [](const Matrix&, const Matrix& y) { return (1.0 - y.array().square()).matrix(); });
}

Matrix sigmoid(const Matrix& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }
Var sigmoid(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return sigmoid(x); },
      [](const Matrix&, const Matrix& y) { return (y.array() * (1.0 - y.array())).matrix(); });
}

Matrix sin(const Matrix& a) { return a.array().sin().matrix(); }
Var sin(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return sin(x); },
      [](const Matrix& x, const Matrix&) { return cos(x); });
}

Matrix cos(const Matrix& a) { return a.array().cos().matrix(); }
Var cos(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return cos(x); },
      [](const Matrix& x, const Matrix&) { return (-x.array().sin()).matrix(); });
}

Matrix exp(const Matrix& a) { return a.array().exp().matrix(); }
Var exp(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return exp(x); }, [](const Matrix&, const Matrix& y) { return y; });
}

Matrix log(const Matrix& a) { return a.array().log().matrix(); }
Var log(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return log(x); },
      [](const Matrix& x, const Matrix&) { return x.array().inverse().matrix(); });
}

Matrix square(const Matrix& a) { return a.array().square().matrix(); }
Var square(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return square(x); },
      [](const Matrix& x, const Matrix&) { return (2.0 * x.array()).matrix(); });
}

Matrix sqrt(const Matrix& a) { return a.array().sqrt().matrix(); }
Var sqrt(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return sqrt(x); },
      [](const Matrix&, const Matrix& y) { return (0.5 / y.array()).matrix(); });
}

Matrix reciprocal(const Matrix& a) { return a.array().inverse().matrix(); }
Var reciprocal(const Var& a) {
  return unary(
      a, [](const Matrix& x) { return reciprocal(x); },
      [](const Matrix&, const Matrix& y) { return (-y.array().square()).matrix(); });
}

Matrix clamp_min(const Matrix& a, double floor) { return a.cwiseMax(floor); }
Var clamp_min(const Var& a, double floor) {
  return unary(
      a, [floor](const Matrix& x) { return clamp_min(x, floor); },
      [floor](const Matrix& x, const Matrix&) {
        return (x.array() > floor).cast<double>().matrix();
      });
}

Matrix wrap_angle(const Matrix& a) {
  constexpr double pi = std::numbers::pi;
  return a.unaryExpr([](double v) {
    double r = v - 2.0 * pi * std::floor((v + pi) / (2.0 * pi));
    if (r >= pi) r -= 2.0 * pi;
    if (r < -pi) r += 2.0 * pi;
    return r;
  });
}
Var wrap_angle(const Var& a) {
  return tape_of(a).record(wrap_angle(a.value()), {a},
                           [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}

// ---- linear algebra / shape -------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) { return a * b; }
Var matmul(const Var& a, const Var& b) {
  return tape_of(a).record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}
Var affine(const Var& x, const Var& w, const Var& b) {
  return tape_of(x).record(affine(x.value(), w.value(), b.value()), {x, w, b},
                           [x, w, b](Tape& t, const Matrix& g, const Matrix&) {
                             if (t.requires_grad(x)) t.accumulate(x, g * w.value().transpose());
                             if (t.requires_grad(w)) t.accumulate(w, x.value().transpose() * g);
                             t.accumulate(b, g.colwise().sum());
                           });
}

Matrix sum_cols(const Matrix& a) { return a.rowwise().sum(); }
Var sum_cols(const Var& a) {
  return tape_of(a).record(sum_cols(a.value()), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Matrix sum_all(const Matrix& a) { return Matrix::Constant(1, 1, a.sum()); }
Var sum_all(const Var& a) {
  return tape_of(a).record(sum_all(a.value()), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Matrix mean_all(const Matrix& a) { return Matrix::Constant(1, 1, a.mean()); }
Var mean_all(const Var& a) {
  return tape_of(a).record(mean_all(a.value()), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const double n = static_cast<double>(a.value().size());
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Matrix slice_cols(const Matrix& a, Eigen::Index start, Eigen::Index count) {
  return a.middleCols(start, count);
}
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  return tape_of(a).record(slice_cols(a.value(), start, count), {a},
                           [a, start](Tape& t, const Matrix& g, const Matrix&) { accumulate_cols(t, a, start, g); });
}

Matrix concat_cols(std::span<const Matrix> parts) {
  Eigen::Index cols = 0;
  for (const Matrix& p : parts) cols += p.cols();
  Matrix out(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const Matrix& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}
Var concat_cols(std::span<const Var> parts) {
  std::vector<Matrix> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  std::vector<Var> owned(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record(concat_cols(values), parts, [owned](Tape& t, const Matrix& g, const Matrix&) {
        Eigen::Index at = 0;
        for (const Var& p : owned) {
          if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
          at += p.cols();
        }
      });
}

Matrix group_mean(const Matrix& a, Eigen::Index group) {
  const Eigen::Index groups = a.rows() / group;
  Matrix out(groups, 1);
  for (Eigen::Index i = 0; i < groups; ++i) out(i, 0) = a.col(0).segment(i * group, group).mean();
  return out;
}
Var group_mean(const Var& a, Eigen::Index group) {
  return tape_of(a).record(group_mean(a.value(), group), {a}, [a, group](Tape& t, const Matrix& g, const Matrix&) {
    Matrix ga(a.rows(), 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) ga(i, 0) = g(i / group, 0) / double(group);
    t.accumulate(a, ga);
  });
}

Matrix logmeanexp(const Matrix& a) {
  const double m = a.maxCoeff();
  const double s = (a.array() - m).exp().sum();
  return Matrix::Constant(1, 1, m + std::log(s / double(a.size())));
}
Var logmeanexp(const Var& a) {
  return tape_of(a).record(logmeanexp(a.value()), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    const double m = x.maxCoeff();
    Matrix w = (x.array() - m).exp().matrix();
    w /= w.sum();
    t.accumulate(a, w * g(0, 0));
  });
}

// ---- LSTM --------------------------------------------------------------------

namespace {

// Pre-activations -> activated gates in place: sigmoid on i, f, o; tanh on g.
void activate_gates(Matrix& a, Eigen::Index h) {
  a.leftCols(2 * h) = sigmoid(Matrix(a.leftCols(2 * h)));
  a.middleCols(2 * h, h) = tanh_array(a.middleCols(2 * h, h).array()).matrix();
  a.rightCols(h) = sigmoid(Matrix(a.rightCols(h)));
}

Matrix lstm_forward(const Matrix& x, const Matrix* state, const Matrix& w, const Matrix& u,
                    const Matrix& b, Matrix& gates) {
  const Eigen::Index h = u.rows();
  gates = x * w;
  if (state != nullptr) gates.noalias() += state->leftCols(h) * u;
  gates.rowwise() += b.row(0);
  activate_gates(gates, h);
  Matrix out(x.rows(), 2 * h);
  auto i = gates.leftCols(h).array();
  auto f = gates.middleCols(h, h).array();
  auto gg = gates.middleCols(2 * h, h).array();
  auto o = gates.rightCols(h).array();
  if (state != nullptr) {
    out.rightCols(h) = (f * state->rightCols(h).array() + i * gg).matrix();
  } else {
    out.rightCols(h) = (i * gg).matrix();
  }
  out.leftCols(h) = (o * tanh_array(out.rightCols(h).array())).matrix();
  return out;
}

}  // namespace

Matrix lstm_cell(const Matrix& x, const Matrix& state, const Matrix& w, const Matrix& u,
                 const Matrix& b) {
  Matrix gates;
  return lstm_forward(x, state.size() == 0 ? nullptr : &state, w, u, b, gates);
}

Var lstm_cell(const Var& x, const Var& state, const Var& w, const Var& u, const Var& b) {
  auto gates = std::make_shared<Matrix>();
  const bool has_state = state.valid();
  Matrix out = lstm_forward(x.value(), has_state ? &state.value() : nullptr, w.value(), u.value(),
                            b.value(), *gates);
  Tape& t = tape_of(x);
  auto backward = [x, state, w, u, b, gates, has_state](Tape& tp, const Matrix& g,
                                                        const Matrix& out) {
    const Eigen::Index h = u.rows();
    const auto i = gates->leftCols(h).array();
    const auto f = gates->middleCols(h, h).array();
    const auto gg = gates->middleCols(2 * h, h).array();
    const auto o = gates->rightCols(h).array();
    const Eigen::ArrayXXd tc = tanh_array(out.rightCols(h).array());
    const auto dh = g.leftCols(h).array();
    const auto dc_in = g.rightCols(h).array();
    const Eigen::ArrayXXd dc = dc_in + dh * o * (1.0 - tc.square());
    Matrix da(g.rows(), 4 * h);
    da.leftCols(h) = (dc * gg * i * (1.0 - i)).matrix();
    if (has_state) {
      da.middleCols(h, h) = (dc * state.value().rightCols(h).array() * f * (1.0 - f)).matrix();
    } else {
      da.middleCols(h, h).setZero();
    }
    da.middleCols(2 * h, h) = (dc * i * (1.0 - gg.square())).matrix();
    da.rightCols(h) = (dh * tc * o * (1.0 - o)).matrix();

    if (tp.requires_grad(w)) tp.accumulate(w, x.value().transpose() * da);
    tp.accumulate(b, da.colwise().sum());
    if (tp.requires_grad(x)) tp.accumulate(x, da * w.value().transpose());
    if (has_state) {
      if (tp.requires_grad(u)) tp.accumulate(u, state.value().leftCols(h).transpose() * da);
      if (tp.requires_grad(state)) {
        Matrix ds(g.rows(), 2 * h);
        ds.leftCols(h) = da * u.value().transpose();
        ds.rightCols(h) = (dc * f).matrix();
        tp.accumulate(state, ds);
      }
    }
  };
  if (has_state) return t.record(std::move(out), {x, state, w, u, b}, backward);
  return t.record(std::move(out), {x, w, u, b}, backward);
}

Var lift(const Matrix& m, const Var& like) { return like.tape()->constant(m); }

}  // namespace pisoc::ad
