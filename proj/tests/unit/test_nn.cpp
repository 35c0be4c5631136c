#include "gradcheck.hpp"
#include "pisoc/nn.hpp"

#include <doctest.h>

using namespace pisoc;
using testing::gradient_error;
using testing::random_matrix;

namespace {

void randomize(std::vector<Matrix>& params, std::uint64_t seed) {
  for (Matrix& p : params) p = random_matrix(p.rows(), p.cols(), seed++, -0.8, 0.8);
}

std::vector<Matrix> sites_of(const Matrix& all, int features) {
  std::vector<Matrix> out;
  for (Eigen::Index i = 0; i < all.cols() / features; ++i) out.push_back(all.middleCols(i * features, features));
  return out;
}

}  // namespace

TEST_CASE("fresh MLP outputs zero") {
  const MlpController mlp(5, {8, 8}, 2, 3);
  const Matrix y = mlp.forward(random_matrix(7, 5, 1, -4.0, 4.0));
  CHECK(y.rows() == 7);
  CHECK(y.cols() == 2);
  CHECK(y.norm() == 0.0);
}

TEST_CASE("single affine layer is matmul plus bias") {
  MlpController mlp(3, {}, 3, 0);
  auto& p = mlp.parameters();
  REQUIRE(p.size() == 2);
  p[0] = Matrix::Identity(3, 3);
  p[1] = random_matrix(1, 3, 2);
  const Matrix x = random_matrix(4, 3, 3);
  const Matrix expected = x + p[1].replicate(4, 1);
  CHECK((mlp.forward(x) - expected).norm() == 0.0);
}

TEST_CASE("MLP weight gradients match central differences") {
  MlpController mlp(3, {6, 5}, 2, 4);
  randomize(mlp.parameters(), 10);
  const Matrix x = random_matrix(5, 3, 5);
  std::vector<Matrix> inputs = mlp.parameters();
  inputs.push_back(x);
  const double err = gradient_error(
      inputs,
      [&](ad::Tape&, const std::vector<ad::Var>& v) {
        return mlp.forward<ad::Var>(v.back(), std::span<const ad::Var>(v.data(), v.size() - 1));
      },
      1e-4);
  CHECK(err < 1e-6);
}

TEST_CASE("fresh recurrent controller outputs zero at any length") {
  const BiRecurrentController rnn(5, 6, 7);
  for (int n : {2, 5, 7}) {
    const Matrix all = random_matrix(3, 5 * n, 8);
    const auto sites = sites_of(all, 5);
    const Matrix y = rnn.forward(std::span<const Matrix>(sites));
    CHECK(y.rows() == 3);
    CHECK(y.cols() == n);
    CHECK(y.norm() == 0.0);
  }
}

TEST_CASE("trained-size controller evaluates at other lengths") {
  BiRecurrentController rnn(5, 4, 9);
  randomize(rnn.parameters(), 30);
  const auto five = sites_of(random_matrix(2, 25, 11), 5);
  const auto seven = sites_of(random_matrix(2, 35, 12), 5);
  const Matrix y5 = rnn.forward(std::span<const Matrix>(five));
  const Matrix y7 = rnn.forward(std::span<const Matrix>(seven));
  CHECK(y5.cols() == 5);
  CHECK(y7.cols() == 7);
  CHECK(y7.allFinite());
  CHECK(rnn.parameters().size() == 8);
}

TEST_CASE("mirrored input equals swapped scan directions") {
  BiRecurrentController rnn(5, 4, 13);
  randomize(rnn.parameters(), 50);
  const auto sites = sites_of(random_matrix(3, 15, 14), 5);
  std::vector<Matrix> mirrored(sites.rbegin(), sites.rend());

  const Matrix y_mirror = rnn.forward(std::span<const Matrix>(mirrored));

  // The cell is shared by both scans, so exchanging directions amounts to
  // exchanging the halves of the head weight.
  BiRecurrentController swapped = rnn;
  Matrix& head = swapped.parameters()[6];
  const Matrix top = head.topRows(4);
  head.topRows(4) = head.bottomRows(4);
  head.bottomRows(4) = top;
  const Matrix y_swapped = swapped.forward(std::span<const Matrix>(sites));

  CHECK((y_mirror.rowwise().reverse() - y_swapped).norm() < 1e-13);
  CHECK((y_mirror.rowwise().reverse() - rnn.forward(std::span<const Matrix>(sites))).norm() > 1e-6);
}

TEST_CASE("recurrent controller gradients match central differences") {
  BiRecurrentController rnn(2, 3, 15);
  randomize(rnn.parameters(), 70);
  const auto sites = sites_of(random_matrix(2, 6, 16), 2);
  std::vector<Matrix> inputs = rnn.parameters();
  for (const Matrix& s : sites) inputs.push_back(s);
  const double err = gradient_error(inputs, [&](ad::Tape&, const std::vector<ad::Var>& v) {
    return rnn.forward<ad::Var>(std::span<const ad::Var>(v.data() + 8, 3), std::span<const ad::Var>(v.data(), 8));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("parameter serialization round trip and shape checks") {
  MlpController mlp(3, {4}, 1, 2);
  randomize(mlp.parameters(), 90);
  const json doc = parameters_to_json(mlp.parameters());
  MlpController other(3, {4}, 1, 5);
  parameters_from_json(doc, other.parameters());
  for (std::size_t i = 0; i < mlp.parameters().size(); ++i)
    CHECK((mlp.parameters()[i] - other.parameters()[i]).norm() == 0.0);

  MlpController wrong(3, {5}, 1, 5);
  const Matrix before = wrong.parameters()[0];
  CHECK_THROWS_AS(parameters_from_json(doc, wrong.parameters()), Error);
  CHECK((wrong.parameters()[0] - before).norm() == 0.0);
}

TEST_CASE("optimizer examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Matrix> p{random_matrix(2, 3, 1)};
    const Matrix before = p[0];
    AdamState st;
    for (int i = 0; i < 10; ++i) sgd_step(p, std::vector<Matrix>{Matrix::Zero(2, 3)}, st, 0.1);
    CHECK((p[0] - before).norm() == 0.0);
  }
  SUBCASE("constant gradient drifts parameters against it") {
    std::vector<Matrix> p{Matrix::Zero(1, 2)};
    Matrix g(1, 2);
    g << 1.0, -2.0;
    AdamState st;
    double last0 = 0.0;
    double last1 = 0.0;
    for (int i = 0; i < 50; ++i) {
      sgd_step(p, std::vector<Matrix>{g}, st, 0.01);
      CHECK(p[0](0, 0) < last0);
      CHECK(p[0](0, 1) > last1);
      last0 = p[0](0, 0);
      last1 = p[0](0, 1);
    }
  }
  SUBCASE("quadratic bowl loses an order of magnitude in 500 steps") {
    std::vector<Matrix> p{random_matrix(3, 3, 4, -2.0, 2.0)};
    const double initial = p[0].squaredNorm();
    AdamState st;
    for (int i = 0; i < 500; ++i) sgd_step(p, std::vector<Matrix>{2.0 * p[0]}, st, 0.01);
    CHECK(p[0].squaredNorm() < initial / 10.0);
  }
  SUBCASE("non-finite gradient is skipped") {
    std::vector<Matrix> p{random_matrix(2, 2, 5)};
    const Matrix before = p[0];
    Matrix g = Matrix::Ones(2, 2);
    g(1, 0) = std::numeric_limits<double>::quiet_NaN();
    AdamState st;
    CHECK_FALSE(sgd_step(p, std::vector<Matrix>{g}, st, 0.1));
    CHECK(st.skipped == 1);
    CHECK(st.step == 0);
    CHECK((p[0] - before).norm() == 0.0);
  }
}
