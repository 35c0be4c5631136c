#include "pisoc/boundary.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace pisoc {

namespace {
constexpr double kPi = std::numbers::pi;
}

double harmonic_variance(double omega, double beta) {
  return 1.0 / (std::tanh(0.5 * beta * omega) * 2.0 * omega);
}

JensenFeynmanFit fit_jensen_feynman(double lambda, double beta) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::Config, "lambda must be >= 0", "lambda");
  if (!(beta > 0.0)) throw Error(ErrorKind::Config, "beta must be positive", "beta");
  auto f = [&](double w) { return w * w - 1.0 - 12.0 * lambda * harmonic_variance(w, beta); };

  JensenFeynmanFit fit;
  if (lambda == 0.0) {
    fit.variance = harmonic_variance(1.0, beta);
    return fit;
  }
  double lo = 1.0;  // f(1) < 0 for lambda > 0
  double hi = 2.0;
  int expand = 0;
  while (f(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++expand > 60) throw Error(ErrorKind::Convergence, "could not bracket the trial frequency");
  }
  double mid = 0.5 * (lo + hi);
  double fm = f(mid);
  int it = 0;
  for (; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    fm = f(mid);
    if (std::abs(fm) < 1e-10 || hi - lo < 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    (fm < 0.0 ? lo : hi) = mid;
  }
  if (std::abs(fm) >= 1e-10)
    throw Error(ErrorKind::Convergence, "trial frequency bisection did not converge");
  fit.omega = mid;
  fit.variance = harmonic_variance(mid, beta);
  fit.residual = fm;
  fit.iterations = it + 1;
  return fit;
}

double rotor_boundary_variance(double coupling, double beta) {
  if (!(coupling >= 0.0)) throw Error(ErrorKind::Config, "J must be >= 0", "J");
  if (coupling == 0.0) return std::numeric_limits<double>::infinity();
  const double r = std::sqrt(coupling);
  return 1.0 / (std::tanh(0.5 * beta * r) * 2.0 * r);
}

double wrapped_normal_log_density(double d, double variance) {
  if (std::isinf(variance)) return -std::log(2.0 * kPi);
  if (!(variance > 0.0)) throw Error(ErrorKind::Numerical, "wrapped normal needs a positive variance");
  d = wrap_angle(d);
  if (variance <= kPi) {
    // Sum over windings, relative to the k = 0 term.
    double sum = 1.0;
    for (int k = 1;; ++k) {
      const double a = std::exp(-((d + 2 * kPi * k) * (d + 2 * kPi * k) - d * d) / (2 * variance));
      const double b = std::exp(-((d - 2 * kPi * k) * (d - 2 * kPi * k) - d * d) / (2 * variance));
      sum += a + b;
      if (a + b < 1e-16 * sum) break;
    }
    return -d * d / (2 * variance) - 0.5 * std::log(2 * kPi * variance) + std::log(sum);
  }
  // Fourier series of the same periodic function.
  double sum = 1.0;
  for (int m = 1;; ++m) {
    const double term = 2.0 * std::exp(-0.5 * m * m * variance);
    sum += term * std::cos(m * d);
    if (term < 1e-16) break;
  }
  return std::log(sum) - std::log(2 * kPi);
}

BoundaryDistribution BoundaryDistribution::gaussian(int dims, double variance, double omega) {
  if (dims < 1 || !(variance > 0.0) || !std::isfinite(variance))
    throw Error(ErrorKind::Config, "Gaussian boundary needs dims >= 1 and a finite variance > 0");
  return BoundaryDistribution(Kind::Gaussian, dims, variance, 1.0, omega);
}

BoundaryDistribution BoundaryDistribution::wrapped_autoregressive(int sites, double variance,
                                                                  double scale) {
  if (sites < 2) throw Error(ErrorKind::Config, "autoregressive boundary needs N >= 2", "N");
  if (!(variance > 0.0) || !(scale > 0.0))
    throw Error(ErrorKind::Config, "autoregressive boundary needs variance > 0 and c_P > 0", "c_P");
  return BoundaryDistribution(Kind::WrappedAutoregressive, sites, scale * variance, scale, 0.0);
}

BoundaryDistribution BoundaryDistribution::for_system(const ModelSystem& system, double scale) {
  if (const auto* osc = std::get_if<AnharmonicOscillator>(&system.potential())) {
    const auto fit = fit_jensen_feynman(osc->lambda, system.beta());
    return gaussian(1, fit.variance, fit.omega);
  }
  if (const auto* rotor = std::get_if<RotorChain>(&system.potential())) {
    return wrapped_autoregressive(system.dim(), rotor_boundary_variance(rotor->coupling, system.beta()),
                                  scale);
  }
  throw Error(ErrorKind::Config, "no boundary distribution is defined for this model", "model.kind");
}

BoundaryDistribution::Samples BoundaryDistribution::sample(std::size_t count, std::uint64_t seed,
                                                           Stream stream,
                                                           std::uint64_t first) const {
  Samples out{Matrix(static_cast<Eigen::Index>(count), dim_),
              Vector(static_cast<Eigen::Index>(count))};
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(-kPi, kPi);
  const double sd = std::sqrt(variance_);
  for (std::size_t m = 0; m < count; ++m) {
    auto rng = rng_stream(seed, stream, first + m);
    Vector z(dim_);
    if (kind_ == Kind::Gaussian) {
      for (int j = 0; j < dim_; ++j) z[j] = sd * normal(rng);
    } else {
      z[0] = wrap_angle(uniform(rng));
      for (int j = 1; j < dim_; ++j) {
        const double step = std::isinf(variance_) ? uniform(rng) : sd * normal(rng);
        z[j] = wrap_angle(z[j - 1] + step);
      }
    }
    out.z.row(static_cast<Eigen::Index>(m)) = z.transpose();
    out.log_p[static_cast<Eigen::Index>(m)] = log_density(z);
  }
  return out;
}

double BoundaryDistribution::log_density(const Vector& z) const {
  if (z.size() != dim_) throw Error(ErrorKind::Dimension, "boundary point has the wrong dimension");
  if (kind_ == Kind::Gaussian) {
    return -0.5 * dim_ * std::log(2 * kPi * variance_) - z.squaredNorm() / (2 * variance_);
  }
  double lp = -std::log(2 * kPi);
  for (int j = 1; j < dim_; ++j) lp += wrapped_normal_log_density(z[j] - z[j - 1], variance_);
  return lp;
}

nlohmann::json BoundaryDistribution::describe() const {
  nlohmann::json j;
  if (kind_ == Kind::Gaussian) {
    j = {{"kind", "gaussian"}, {"omega", omega_}, {"variance", variance_}};
  } else {
    j = {{"kind", "wrapped_autoregressive"},
         {"c_P", scale_},
         {"variance", std::isinf(variance_) ? -1.0 : variance_},
         {"z1", "uniform"}};
  }
  return j;
}

}  // namespace pisoc
