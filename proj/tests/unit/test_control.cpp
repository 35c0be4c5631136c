#include "gradcheck.hpp"
#include "pisoc/control.hpp"

#include <doctest.h>

#include <numbers>

using namespace pisoc;
using testing::random_matrix;

namespace {

constexpr double kPi = std::numbers::pi;

Vector v1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("bridge drift examples") {
  ControlFunction c(Geometry::cartesian(1), 1e-3);
  c.set_endpoint(v1(1.0));
  CHECK(evaluate_control(c, v1(0.0), 0.0, 1.0)[0] == doctest::Approx(1.0 / 1.001));
  CHECK(evaluate_control(c, v1(1.0), 0.3, 1.0)[0] == 0.0);

  ControlFunction ring(Geometry::torus(2), 1e-3);
  Vector z(2);
  z << 3.0, 0.0;
  Vector x(2);
  x << -3.0, 0.0;
  ring.set_endpoint(z);
  const Vector u = ring.drift(x.transpose(), z.transpose(), 0.25, 1.0).row(0).transpose();
  CHECK(u[0] < 0.0);
  CHECK(std::abs(u[0]) == doctest::Approx((2.0 * kPi - 6.0) / (0.75 + 1e-3)));
  CHECK(u[1] == 0.0);
}

TEST_CASE("feature examples") {
  Vector x(2);
  x << 0.0, 1.0;
  Vector z(2);
  z << kPi / 2.0, 0.0;
  const Matrix f = features(x, z, 0.0, 1.0, Geometry::torus(2));
  CHECK(f.rows() == 2);
  CHECK(f(0, 0) == doctest::Approx(0.0));
  CHECK(f(0, 1) == doctest::Approx(1.0));
  CHECK(f(0, 2) == doctest::Approx(1.0));
  CHECK(f(0, 3) == doctest::Approx(0.0));
  CHECK(f(0, 4) == 0.0);

  const Vector shifted = x.array() + 2.0 * kPi;
  CHECK((features(shifted, z, 0.3, 1.0, Geometry::torus(2)) - features(x, z, 0.3, 1.0, Geometry::torus(2)))
            .norm() < 1e-12);

  const Matrix c = features(v1(0.5), v1(-0.2), 2.0, 2.0, Geometry::cartesian(1));
  CHECK(c.cols() == 3);
  CHECK(c(0, 0) == 0.5);
  CHECK(c(0, 1) == -0.2);
  CHECK(c(0, 2) == 1.0);
}

TEST_CASE("zero-initialized residual reproduces the bridge") {
  const Matrix x = random_matrix(6, 3, 1, -3.0, 3.0);
  const Matrix z = random_matrix(6, 3, 2, -3.0, 3.0);
  const ControlFunction bridge(Geometry::torus(3), 2.5e-3);
  const Matrix expected = bridge.drift(x, z, 0.4, 2.0);
  for (const auto& c : {ControlFunction::with_mlp(Geometry::torus(3), 2.5e-3, {8, 8}, 3),
                        ControlFunction::with_birecurrent(Geometry::torus(3), 2.5e-3, 4, 3)}) {
    CHECK((c.drift(x, z, 0.4, 2.0) - expected).norm() == 0.0);
  }
  const Matrix xc = random_matrix(4, 1, 3);
  const Matrix zc = random_matrix(4, 1, 4);
  const auto mlp = ControlFunction::with_mlp(Geometry::cartesian(1), 2.5e-3, {8}, 5);
  CHECK((mlp.drift(xc, zc, 0.1, 1.0) - ControlFunction(Geometry::cartesian(1), 2.5e-3).drift(xc, zc, 0.1, 1.0))
            .norm() == 0.0);
}

TEST_CASE("torus drift is periodic and translation covariant for the bridge") {
  const ControlFunction c(Geometry::torus(4), 1e-3);
  const Matrix x = random_matrix(5, 4, 6, -kPi, kPi);
  const Matrix z = random_matrix(5, 4, 7, -kPi, kPi);
  const Matrix u = c.drift(x, z, 0.2, 1.0);
  const Matrix turned = x.array() + 4.0 * kPi;
  CHECK((c.drift(turned, z, 0.2, 1.0) - u).norm() < 1e-10);
  const Matrix moved_x = ad::wrap_angle(Matrix(x.array() + 0.7));
  const Matrix moved_z = ad::wrap_angle(Matrix(z.array() + 0.7));
  CHECK((c.drift(moved_x, moved_z, 0.2, 1.0) - u).norm() < 1e-10);
}

TEST_CASE("drift rejects bad inputs") {
  const ControlFunction c(Geometry::cartesian(2), 1e-3);
  CHECK_THROWS_AS(c.drift(Matrix::Zero(2, 3), Matrix::Zero(2, 3), 0.0, 1.0), Error);
  CHECK_THROWS_AS(c.drift(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 1.0, 1.0), Error);
  CHECK_THROWS_AS(ControlFunction(Geometry::cartesian(1), 0.0), Error);
  CHECK_THROWS_AS(ControlFunction::with_birecurrent(Geometry::cartesian(2), 1e-3, 4, 0), Error);
}

TEST_CASE("checkpoint round trip") {
  auto c = ControlFunction::with_birecurrent(Geometry::torus(3), 2e-3, 4, 8);
  for (std::size_t i = 0; i < c.parameters().size(); ++i)
    c.parameters()[i] = random_matrix(c.parameters()[i].rows(), c.parameters()[i].cols(), 20 + i);
  c.set_normalize_time(false);
  const json doc = c.to_checkpoint(json{{"note", "x"}});
  const ControlFunction back = ControlFunction::from_checkpoint(doc);
  CHECK(back.residual_kind() == "birecurrent");
  CHECK(back.eps_t() == 2e-3);
  CHECK_FALSE(back.normalize_time());
  const Matrix x = random_matrix(3, 3, 30, -3.0, 3.0);
  const Matrix z = random_matrix(3, 3, 31, -3.0, 3.0);
  CHECK((back.drift(x, z, 0.5, 5.0) - c.drift(x, z, 0.5, 5.0)).norm() == 0.0);
  CHECK(checkpoint_id(doc) == checkpoint_id(back.to_checkpoint(json{{"note", "x"}})));
  CHECK(doc.at("metadata").at("note") == "x");

  // Same weights on a longer chain.
  const ControlFunction longer = ControlFunction::from_checkpoint(doc, Geometry::torus(7));
  CHECK(longer.geometry().dim() == 7);
  CHECK(longer.drift(random_matrix(2, 7, 32), random_matrix(2, 7, 33), 0.5, 5.0).cols() == 7);
}

TEST_CASE("checkpoint mismatches are errors") {
  const auto mlp = ControlFunction::with_mlp(Geometry::cartesian(1), 1e-3, {4}, 1);
  const json doc = mlp.to_checkpoint(json::object());
  CHECK_THROWS_AS(ControlFunction::from_checkpoint(doc, Geometry::cartesian(3)), Error);
  CHECK_THROWS_AS(ControlFunction::from_checkpoint(doc, Geometry::torus(3)), Error);

  json broken = doc;
  broken["parameters"][0]["shape"] = {2, 4};
  CHECK_THROWS_AS(ControlFunction::from_checkpoint(broken), Error);

  const auto ring = ControlFunction::with_mlp(Geometry::torus(3), 1e-3, {4}, 1);
  CHECK_THROWS_AS(ring.resized(5), Error);
  CHECK_FALSE(ring.size_independent());
}
