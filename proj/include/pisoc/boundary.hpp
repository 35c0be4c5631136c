#pragma once

// Importance distributions P(z) for the closed-path base points of the trace.

#include "pisoc/model.hpp"
#include "pisoc/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>

namespace pisoc {

struct JensenFeynmanFit {
  double omega = 1.0;
  double variance = 0.0;  // s^2 = coth(beta omega / 2) / (2 omega)
  double residual = 0.0;
  int iterations = 0;
};

/// Harmonic trial frequency for x^2/2 + lambda x^4 at inverse temperature
/// beta: the root of omega^2 = 1 + 12 lambda s^2(omega).
JensenFeynmanFit fit_jensen_feynman(double lambda, double beta);

/// Thermal position variance of a harmonic mode of frequency omega.
double harmonic_variance(double omega, double beta);

/// coth(beta sqrt(J)/2) / (2 sqrt(J)); +infinity at J = 0.
double rotor_boundary_variance(double coupling, double beta);

/// log of the wrapped normal density on [-pi, pi) at angle d. An infinite
/// variance gives the uniform density.
double wrapped_normal_log_density(double d, double variance);

class BoundaryDistribution {
 public:
  enum class Kind { Gaussian, WrappedAutoregressive };

  static BoundaryDistribution gaussian(int dims, double variance, double omega = 0.0);
  // First angle uniform, then wrapped-normal steps of the given variance.
  static BoundaryDistribution wrapped_autoregressive(int sites, double variance, double scale = 1.0);
  // Jensen-Feynman Gaussian for the oscillator, autoregressive chain for
  // rotors (variance scale * sigma^2).
  static BoundaryDistribution for_system(const ModelSystem& system, double scale = 1.0);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double variance() const { return variance_; }
  double scale() const { return scale_; }
  double omega() const { return omega_; }

  struct Samples {
    Matrix z;        // [M x n]
    Vector log_p;    // [M]
  };
  // Points [first, first + count) of the stream; point m depends only on
  // (seed, stream, m).
  Samples sample(std::size_t count, std::uint64_t seed, Stream stream = Stream::Boundary,
                 std::uint64_t first = 0) const;
  double log_density(const Vector& z) const;

  nlohmann::json describe() const;

 private:
  BoundaryDistribution(Kind kind, int dim, double variance, double scale, double omega)
      : kind_(kind), dim_(dim), variance_(variance), scale_(scale), omega_(omega) {}
  Kind kind_;
  int dim_;
  double variance_;  // per-step variance actually used (scale already applied)
  double scale_;
  double omega_;
};

}  // namespace pisoc
