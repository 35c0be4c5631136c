#include "gradcheck.hpp"

#include <doctest.h>

#include <numbers>

namespace ad = pisoc::ad;
using testing::gradient_error;
using testing::random_matrix;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kTol = 1e-6;

Matrix rnd(Eigen::Index r, Eigen::Index c, std::uint64_t seed) { return random_matrix(r, c, seed); }

}  // namespace

TEST_CASE("elementwise binary gradients") {
  const std::vector<Matrix> ab{rnd(4, 3, 1), rnd(4, 3, 2)};
  const Matrix k = rnd(4, 3, 3);
  CHECK(gradient_error(ab, [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }) < kTol);
  CHECK(gradient_error(ab, [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }) < kTol);
  CHECK(gradient_error(ab, [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::add(v[0], k); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::add(k, v[0]); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], k); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::sub(k, v[0]); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], k); }) < kTol);
  CHECK(gradient_error({ab[0]}, [&](Tape&, const std::vector<Var>& v) { return ad::mul(k, v[0]); }) < kTol);
}

TEST_CASE("broadcast gradients") {
  const Matrix a = rnd(5, 3, 4);
  const Matrix col = rnd(5, 1, 5);
  const Matrix row = rnd(1, 3, 6);
  CHECK(gradient_error({a, col}, [](Tape&, const std::vector<Var>& v) { return ad::mul_col(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({a}, [&](Tape&, const std::vector<Var>& v) { return ad::mul_col(v[0], col); }) < kTol);
  CHECK(gradient_error({a, row}, [](Tape&, const std::vector<Var>& v) { return ad::add_row(v[0], v[1]); }) < kTol);
}

TEST_CASE("unary gradients") {
  const Matrix a = rnd(3, 4, 7);
  const Matrix pos = random_matrix(3, 4, 8, 0.3, 2.0);
  using F = Var (*)(const Var&);
  for (F f : {static_cast<F>(ad::tanh), static_cast<F>(ad::sigmoid), static_cast<F>(ad::sin),
              static_cast<F>(ad::cos), static_cast<F>(ad::exp), static_cast<F>(ad::square)}) {
    CHECK(gradient_error({a}, [f](Tape&, const std::vector<Var>& v) { return f(v[0]); }) < kTol);
  }
  for (F f : {static_cast<F>(ad::log), static_cast<F>(ad::sqrt), static_cast<F>(ad::reciprocal)}) {
    CHECK(gradient_error({pos}, [f](Tape&, const std::vector<Var>& v) { return f(v[0]); }) < kTol);
  }
  CHECK(gradient_error({a}, [](Tape&, const std::vector<Var>& v) { return ad::scale(v[0], -2.5); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, const std::vector<Var>& v) { return ad::shift(v[0], 0.75); }) < kTol);
  // Away from the kink, and in the interior of [-pi, pi).
  CHECK(gradient_error({pos}, [](Tape&, const std::vector<Var>& v) { return ad::clamp_min(v[0], 0.1); }) < kTol);
  CHECK(gradient_error({pos}, [](Tape&, const std::vector<Var>& v) { return ad::clamp_min(v[0], 5.0); }) < kTol);
  CHECK(gradient_error({a}, [](Tape&, const std::vector<Var>& v) {
          return ad::wrap_angle(ad::shift(v[0], 2.0 * std::numbers::pi));
        }) < kTol);
}

TEST_CASE("linear algebra and shape gradients") {
  const Matrix x = rnd(6, 3, 9);
  const Matrix w = rnd(3, 4, 10);
  const Matrix b = rnd(1, 4, 11);
  CHECK(gradient_error({x, w}, [](Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }) < kTol);
  CHECK(gradient_error({x, w, b}, [](Tape&, const std::vector<Var>& v) {
          return ad::affine(v[0], v[1], v[2]);
        }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, const std::vector<Var>& v) { return ad::sum_cols(v[0]); }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, const std::vector<Var>& v) { return ad::sum_all(v[0]); }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, const std::vector<Var>& v) { return ad::mean_all(v[0]); }) < kTol);
  CHECK(gradient_error({x}, [](Tape&, const std::vector<Var>& v) { return ad::slice_cols(v[0], 1, 2); }) < kTol);
  CHECK(gradient_error({x, rnd(6, 2, 12)}, [](Tape&, const std::vector<Var>& v) {
          return ad::concat_cols(std::span<const Var>(v));
        }) < kTol);
  const Matrix c = rnd(6, 1, 13);
  CHECK(gradient_error({c}, [](Tape&, const std::vector<Var>& v) { return ad::group_mean(v[0], 3); }) < kTol);
  CHECK(gradient_error({random_matrix(8, 1, 14, -3.0, 3.0)},
                       [](Tape&, const std::vector<Var>& v) { return ad::logmeanexp(v[0]); }) < kTol);
}

TEST_CASE("lstm cell gradients") {
  const int h = 3;
  const Matrix x = rnd(4, 2, 15);
  const Matrix state = rnd(4, 2 * h, 16);
  const Matrix w = rnd(2, 4 * h, 17);
  const Matrix u = rnd(h, 4 * h, 18);
  const Matrix b = rnd(1, 4 * h, 19);
  CHECK(gradient_error({x, state, w, u, b}, [](Tape&, const std::vector<Var>& v) {
          return ad::lstm_cell(v[0], v[1], v[2], v[3], v[4]);
        }) < kTol);
  // Zero initial state: the recurrent weights are unused.
  CHECK(gradient_error({x, w, u, b}, [](Tape&, const std::vector<Var>& v) {
          return ad::lstm_cell(v[0], Var{}, v[1], v[2], v[3]);
        }) < kTol);
  // Two steps chained through the state.
  CHECK(gradient_error({x, w, u, b}, [](Tape&, const std::vector<Var>& v) {
          const Var s = ad::lstm_cell(v[0], Var{}, v[1], v[2], v[3]);
          return ad::lstm_cell(ad::scale(v[0], -1.0), s, v[1], v[2], v[3]);
        }) < kTol);
}

TEST_CASE("lstm cell matches the gate equations") {
  const int h = 2;
  const Matrix x = rnd(1, 3, 20);
  const Matrix state = rnd(1, 2 * h, 21);
  const Matrix w = rnd(3, 4 * h, 22);
  const Matrix u = rnd(h, 4 * h, 23);
  const Matrix b = rnd(1, 4 * h, 24);
  const Matrix out = ad::lstm_cell(x, state, w, u, b);
  const Matrix a = x * w + state.leftCols(h) * u + b;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (int j = 0; j < h; ++j) {
    const double i = sig(a(0, j));
    const double f = sig(a(0, h + j));
    const double g = std::tanh(a(0, 2 * h + j));
    const double o = sig(a(0, 3 * h + j));
    const double c = f * state(0, h + j) + i * g;
    CHECK(out(0, h + j) == doctest::Approx(c).epsilon(1e-13));
    CHECK(out(0, j) == doctest::Approx(o * std::tanh(c)).epsilon(1e-13));
  }
}

TEST_CASE("backward examples") {
  Tape tape;
  const Matrix p = rnd(3, 2, 25);
  const Var v = tape.variable(p);
  SUBCASE("sum of squares gives twice the parameters") {
    tape.backward(ad::sum_all(ad::square(v)));
    CHECK((tape.grad(v) - 2.0 * p).norm() < 1e-14);
  }
  SUBCASE("constant loss gives zero gradient") {
    const Var c = tape.constant(Matrix::Constant(1, 1, 3.0));
    tape.backward(ad::scale(c, 2.0));
    CHECK(tape.grad(v).norm() == 0.0);
  }
  SUBCASE("shared subexpressions accumulate") {
    const Var s = ad::sum_all(v);
    tape.backward(ad::add(s, ad::scale(s, 2.0)));
    CHECK((tape.grad(v) - Matrix::Constant(3, 2, 3.0)).norm() < 1e-14);
  }
}

TEST_CASE("plain and taped forward values agree") {
  const Matrix a = rnd(4, 4, 26);
  Tape tape;
  const Var v = tape.variable(a);
  CHECK((ad::tanh(v).value() - a.array().tanh().matrix()).norm() < 1e-14);
  CHECK((ad::wrap_angle(tape.constant(Matrix::Constant(1, 1, 3.0 * std::numbers::pi))).value()(0, 0) +
         std::numbers::pi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ad::logmeanexp(Matrix::Constant(3, 1, 1000.0))(0, 0) == doctest::Approx(1000.0));
}
