#include "pisoc/error.hpp"
#include "pisoc/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace pisoc;

TEST_CASE("log-sum-exp is stable") {
  const std::vector<double> big{1000.0, 1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(3.0)));
  CHECK(log_mean_exp(big) == doctest::Approx(1000.0));
  const std::vector<double> small{-1000.0, -1001.0};
  CHECK(log_sum_exp(small) == doctest::Approx(-1000.0 + std::log1p(std::exp(-1.0))));
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> with_zero{-inf, 0.0};
  CHECK(log_sum_exp(with_zero) == doctest::Approx(0.0));
  CHECK(log_sum_exp(std::vector<double>{}) == -inf);
  CHECK_THROWS_AS(log_mean_exp(std::vector<double>{}), Error);
}

TEST_CASE("streaming log-sum-exp matches the batch form") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-800.0, 800.0);
  std::vector<double> a;
  LogSumExp s;
  for (int i = 0; i < 500; ++i) {
    a.push_back(u(rng));
    s.add(a.back());
  }
  CHECK(s.value() == doctest::Approx(log_sum_exp(a)).epsilon(1e-14));
  CHECK(s.log_mean() == doctest::Approx(log_mean_exp(a)).epsilon(1e-14));
  CHECK(s.count() == 500);
  LogSumExp empty;
  CHECK(empty.value() == -std::numeric_limits<double>::infinity());
}

TEST_CASE("mean and variance") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  CHECK(mean(a) == 2.5);
  CHECK(sample_variance(a) == doctest::Approx(5.0 / 3.0));
  CHECK(std::isnan(sample_variance(std::vector<double>{1.0})));
}

TEST_CASE("bootstrap error of a mean matches the analytic value") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> x(400);
  for (double& v : x) v = n(rng);
  const double se = bootstrap_std_error(x.size(), 2000, 7, [&](std::span<const int> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    return s / double(x.size());
  });
  const double analytic = std::sqrt(sample_variance(x) / double(x.size()));
  CHECK(se == doctest::Approx(analytic).epsilon(0.08));
  // Fixed seed, fixed answer.
  const double again = bootstrap_std_error(x.size(), 2000, 7, [&](std::span<const int> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    return s / double(x.size());
  });
  CHECK(se == again);
  CHECK(std::isnan(bootstrap_std_error(1, 100, 1, [](std::span<const int>) { return 0.0; })));
}

TEST_CASE("delta-method error of log-mean-exp") {
  // Equal weights: no spread.
  CHECK(log_mean_exp_std_error(std::vector<double>(10, -3.0)) == 0.0);
  // Two weights 1 and e: sd/(sqrt(n) mean).
  const std::vector<double> lw{0.0, 1.0};
  const double w1 = 1.0;
  const double w2 = std::exp(1.0);
  const double mu = 0.5 * (w1 + w2);
  const double sd = std::sqrt((w1 - mu) * (w1 - mu) + (w2 - mu) * (w2 - mu));
  CHECK(log_mean_exp_std_error(lw) == doctest::Approx(sd / std::sqrt(2.0) / mu));
  // Shifting all log-weights leaves the error unchanged.
  CHECK(log_mean_exp_std_error(std::vector<double>{700.0, 701.0}) == doctest::Approx(sd / std::sqrt(2.0) / mu));
}
