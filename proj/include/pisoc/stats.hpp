#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace pisoc {

double log_sum_exp(std::span<const double> a);
double log_mean_exp(std::span<const double> a);
double mean(std::span<const double> a);
double sample_variance(std::span<const double> a);

/// Streaming log-sum-exp: keeps a running max so no term ever overflows.
class LogSumExp {
 public:
  void add(double a);
  double value() const;  // -inf when empty
  double log_mean() const;
  std::size_t count() const { return count_; }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

/// Standard deviation of `statistic` over `resamples` block-bootstrap
/// replicates. The statistic receives a multiplicity for each of the
/// `blocks` blocks.
double bootstrap_std_error(std::size_t blocks, int resamples, std::uint64_t seed,
                           const std::function<double(std::span<const int>)>& statistic);

/// Delta-method standard error of log(mean(w)) from log-weights.
double log_mean_exp_std_error(std::span<const double> log_w);

}  // namespace pisoc
