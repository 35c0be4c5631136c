#include "pisoc/boundary.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace pisoc;

namespace {

constexpr double kPi = std::numbers::pi;

double coth(double x) { return 1.0 / std::tanh(x); }

// Independent root of omega^2 = 1 + 12 lambda coth(beta omega / 2) / (2 omega)
// by a coarse scan and secant refinement.
double scan_root(double lambda, double beta) {
  auto f = [&](double w) { return w * w - 1.0 - 6.0 * lambda * coth(0.5 * beta * w) / w; };
  double a = 1.0;
  double b = 1.0;
  for (double w = 1.0; w < 50.0; w += 1e-3) {
    if (f(w) > 0.0) {
      b = w;
      break;
    }
    a = w;
  }
  for (int i = 0; i < 100; ++i) {
    const double c = b - f(b) * (b - a) / (f(b) - f(a));
    a = b;
    b = c;
    if (std::abs(a - b) < 1e-15) break;
  }
  return b;
}

}  // namespace

TEST_CASE("trial frequency at lambda = 0 is the bare oscillator") {
  for (double beta : {0.5, 1.0, 5.0}) {
    const auto fit = fit_jensen_feynman(0.0, beta);
    CHECK(fit.omega == 1.0);
    CHECK(fit.variance == doctest::Approx(coth(0.5 * beta) / 2.0));
  }
}

TEST_CASE("trial frequency root") {
  const auto fit = fit_jensen_feynman(5.0, 5.0);
  // At beta = 5: omega^2 = 1 + 30 coth(2.5 omega) / omega.
  CHECK(fit.omega * fit.omega ==
        doctest::Approx(1.0 + 30.0 * coth(2.5 * fit.omega) / fit.omega).epsilon(1e-10));
  CHECK(fit.omega == doctest::Approx(scan_root(5.0, 5.0)).epsilon(1e-9));
  CHECK(fit.variance == doctest::Approx(coth(2.5 * fit.omega) / (2.0 * fit.omega)).epsilon(1e-12));
  for (double lambda : {0.1, 0.5, 1.0, 2.0}) {
    for (double beta : {0.5, 5.0}) {
      CHECK(fit_jensen_feynman(lambda, beta).omega == doctest::Approx(scan_root(lambda, beta)).epsilon(1e-9));
    }
  }
}

TEST_CASE("trial variance shrinks as the anharmonicity grows") {
  for (double beta : {0.5, 5.0}) {
    double previous = fit_jensen_feynman(0.0, beta).variance;
    for (double lambda : {0.1, 0.5, 1.0, 2.0, 5.0, 20.0}) {
      const double s2 = fit_jensen_feynman(lambda, beta).variance;
      CHECK(s2 < previous);
      previous = s2;
    }
  }
  CHECK_THROWS_AS(fit_jensen_feynman(-1.0, 1.0), Error);
  CHECK_THROWS_AS(fit_jensen_feynman(1.0, 0.0), Error);
}

TEST_CASE("rotor step variance") {
  CHECK(rotor_boundary_variance(1.0, 5.0) == doctest::Approx(coth(2.5) / 2.0));
  CHECK(rotor_boundary_variance(1.0, 5.0) == doctest::Approx(0.50678).epsilon(1e-5));
  CHECK(std::isinf(rotor_boundary_variance(0.0, 5.0)));
  // Strong coupling: ground-state width 1/(2 sqrt J).
  CHECK(rotor_boundary_variance(1e6, 5.0) == doctest::Approx(1.0 / 2000.0));
  // Weak coupling: classical 1/(beta J).
  CHECK(rotor_boundary_variance(1e-8, 2.0) == doctest::Approx(1.0 / (2.0 * 1e-8)).epsilon(1e-6));
}

TEST_CASE("wrapped normal density normalizes and matches both series") {
  for (double var : {0.05, 0.5, 3.0, 3.5, 20.0}) {
    double total = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) total += std::exp(wrapped_normal_log_density(-kPi + (i + 0.5) * 2 * kPi / n, var));
    CHECK(total * 2 * kPi / n == doctest::Approx(1.0).epsilon(1e-10));
  }
  // Both branches agree across the switch.
  for (double d : {-3.0, -1.0, 0.0, 0.4, 2.9}) {
    double direct = 0.0;
    for (int k = -20; k <= 20; ++k)
      direct += std::exp(-(d + 2 * kPi * k) * (d + 2 * kPi * k) / (2 * 3.5)) / std::sqrt(2 * kPi * 3.5);
    CHECK(wrapped_normal_log_density(d, 3.5) == doctest::Approx(std::log(direct)).epsilon(1e-12));
    CHECK(wrapped_normal_log_density(d + 2 * kPi, 0.2) == doctest::Approx(wrapped_normal_log_density(d, 0.2)));
  }
  CHECK(wrapped_normal_log_density(1.0, std::numeric_limits<double>::infinity()) ==
        doctest::Approx(-std::log(2 * kPi)));
}

TEST_CASE("two-site chain density integrates to one") {
  for (double var : {0.3, 0.50678, 6.0}) {
    const auto p = BoundaryDistribution::wrapped_autoregressive(2, var);
    const int n = 400;
    const double h = 2 * kPi / n;
    double total = 0.0;
    Vector z(2);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        z << -kPi + (i + 0.5) * h, -kPi + (j + 0.5) * h;
        total += std::exp(p.log_density(z));
      }
    }
    CHECK(std::abs(total * h * h - 1.0) < 1e-6);
  }
}

TEST_CASE("sampled chain steps have the wrapped normal moments") {
  const auto p = BoundaryDistribution::for_system(ModelSystem::rotor_chain(4, 1.0, 5.0), 1.5);
  CHECK(p.variance() == doctest::Approx(1.5 * coth(2.5) / 2.0));
  const std::size_t m = 40000;
  const auto s = p.sample(m, 21);
  double c = 0.0;
  double c2 = 0.0;
  for (Eigen::Index r = 0; r < s.z.rows(); ++r) {
    const double v = std::cos(s.z(r, 2) - s.z(r, 1));
    c += v;
    c2 += v * v;
    CHECK(s.log_p[r] == doctest::Approx(p.log_density(s.z.row(r).transpose())));
  }
  c /= double(m);
  const double se = std::sqrt((c2 / double(m) - c * c) / double(m));
  CHECK(std::abs(c - std::exp(-0.5 * p.variance())) < 4.0 * se);
  CHECK(s.z.minCoeff() >= -kPi);
  CHECK(s.z.maxCoeff() < kPi);
}

TEST_CASE("sampling is deterministic per point") {
  const auto p = BoundaryDistribution::gaussian(3, 0.7);
  const auto all = p.sample(30, 5);
  const auto again = p.sample(30, 5);
  CHECK((all.z - again.z).norm() == 0.0);
  const auto tail = p.sample(10, 5, Stream::Boundary, 20);
  CHECK((all.z.bottomRows(10) - tail.z).norm() == 0.0);
  CHECK((p.sample(30, 6).z - all.z).norm() > 0.0);
  const Vector z = all.z.row(0).transpose();
  CHECK(p.log_density(z) ==
        doctest::Approx(-1.5 * std::log(2 * kPi * 0.7) - z.squaredNorm() / 1.4));
}

TEST_CASE("boundary selection and errors") {
  const auto osc = BoundaryDistribution::for_system(ModelSystem::anharmonic(5.0, 5.0));
  CHECK(osc.kind() == BoundaryDistribution::Kind::Gaussian);
  CHECK(osc.variance() == doctest::Approx(fit_jensen_feynman(5.0, 5.0).variance));
  const auto free = BoundaryDistribution::for_system(ModelSystem::rotor_chain(3, 0.0, 1.0));
  CHECK(std::isinf(free.variance()));
  CHECK_THROWS_AS(BoundaryDistribution::for_system(ModelSystem::coulomb(1.0)), Error);
  CHECK_THROWS_AS(BoundaryDistribution::wrapped_autoregressive(1, 1.0), Error);
  CHECK_THROWS_AS(BoundaryDistribution::gaussian(1, -1.0), Error);
  CHECK_THROWS_AS(osc.log_density(Vector::Zero(2)), Error);
}
