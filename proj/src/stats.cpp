#include "pisoc/stats.hpp"

#include "pisoc/error.hpp"
#include "pisoc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pisoc {

double log_sum_exp(std::span<const double> a) {
  if (a.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : a) s += std::exp(v - m);
  return m + std::log(s);
}

double log_mean_exp(std::span<const double> a) {
  if (a.empty()) throw Error(ErrorKind::Numerical, "log-mean-exp of an empty set");
  return log_sum_exp(a) - std::log(static_cast<double>(a.size()));
}

double mean(std::span<const double> a) {
  if (a.empty()) throw Error(ErrorKind::Numerical, "mean of an empty set");
  double s = 0.0;
  for (double v : a) s += v;
  return s / static_cast<double>(a.size());
}

double sample_variance(std::span<const double> a) {
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(a);
  double s = 0.0;
  for (double v : a) s += (v - m) * (v - m);
  return s / static_cast<double>(a.size() - 1);
}

void LogSumExp::add(double a) {
  ++count_;
  if (a == -std::numeric_limits<double>::infinity()) return;
  if (a <= max_) {
    sum_ += std::exp(a - max_);
  } else {
    sum_ = sum_ * std::exp(max_ - a) + 1.0;
    max_ = a;
  }
}

double LogSumExp::value() const {
  if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
  return max_ + std::log(sum_);
}

double LogSumExp::log_mean() const {
  if (count_ == 0) throw Error(ErrorKind::Numerical, "log-mean-exp of an empty set");
  return value() - std::log(static_cast<double>(count_));
}

double bootstrap_std_error(std::size_t blocks, int resamples, std::uint64_t seed,
                           const std::function<double(std::span<const int>)>& statistic) {
  if (blocks < 2 || resamples < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> reps;
  reps.reserve(static_cast<std::size_t>(resamples));
  std::vector<int> counts(blocks);
  for (int r = 0; r < resamples; ++r) {
    auto rng = rng_stream(seed, Stream::Bootstrap, static_cast<std::uint64_t>(r));
    std::uniform_int_distribution<std::size_t> pick(0, blocks - 1);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < blocks; ++i) ++counts[pick(rng)];
    const double v = statistic(counts);
    if (std::isfinite(v)) reps.push_back(v);
  }
  return std::sqrt(sample_variance(reps));
}

double log_mean_exp_std_error(std::span<const double> log_w) {
  // se(log mean w) = sd(w) / (sqrt(n) mean(w)), evaluated relative to max.
  const std::size_t n = log_w.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = *std::max_element(log_w.begin(), log_w.end());
  double s1 = 0.0;
  double s2 = 0.0;
  for (double v : log_w) {
    const double w = std::exp(v - m);
    s1 += w;
    s2 += w * w;
  }
  const double mu = s1 / double(n);
  const double var = std::max(0.0, (s2 / double(n) - mu * mu) * double(n) / double(n - 1));
  return std::sqrt(var / double(n)) / mu;
}

}  // namespace pisoc
