#include "pisoc/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pisoc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Architecture: return "architecture";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Geometry Geometry::cartesian(int dims) {
  if (dims < 1) throw Error(ErrorKind::Config, "cartesian geometry needs at least one dimension");
  return Geometry(Kind::Cartesian, dims);
}

Geometry Geometry::torus(int sites) {
  if (sites < 2) throw Error(ErrorKind::Config, "torus geometry needs at least two sites", "N");
  return Geometry(Kind::Torus, sites);
}

ModelSystem::ModelSystem(Geometry g, Potential p, double beta)
    : geometry_(g), potential_(p), beta_(beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw Error(ErrorKind::Config, "beta must be positive", "beta");
}

ModelSystem ModelSystem::free_particle(int dims, double beta) {
  return ModelSystem(Geometry::cartesian(dims), FreeParticle{}, beta);
}

ModelSystem ModelSystem::anharmonic(double lambda, double beta) {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::Config, "lambda must be >= 0", "lambda");
  return ModelSystem(Geometry::cartesian(1), AnharmonicOscillator{lambda}, beta);
}

ModelSystem ModelSystem::coulomb(double beta, double r_cut) {
  if (!(r_cut > 0.0)) throw Error(ErrorKind::Config, "r_cut must be positive", "r_cut");
  return ModelSystem(Geometry::cartesian(3), Coulomb{r_cut}, beta);
}

ModelSystem ModelSystem::rotor_chain(int sites, double coupling, double beta,
                                     ChainBoundary boundary) {
  if (!(coupling >= 0.0)) throw Error(ErrorKind::Config, "J must be >= 0", "J");
  return ModelSystem(Geometry::torus(sites), RotorChain{coupling, boundary}, beta);
}

ModelSystem ModelSystem::with_sites(int sites) const {
  const auto* rotor = std::get_if<RotorChain>(&potential_);
  if (rotor == nullptr)
    throw Error(ErrorKind::Config, "only rotor chains can change their number of sites", "N");
  return rotor_chain(sites, rotor->coupling, beta_, rotor->boundary);
}

ModelSystem ModelSystem::with_beta(double beta) const {
  return ModelSystem(geometry_, potential_, beta);
}

std::vector<std::pair<int, int>> ModelSystem::bonds() const {
  std::vector<std::pair<int, int>> out;
  const auto* rotor = std::get_if<RotorChain>(&potential_);
  if (rotor == nullptr) return out;
  const int n = dim();
  for (int i = 0; i + 1 < n; ++i) out.emplace_back(i, i + 1);
  if (rotor->boundary == ChainBoundary::Periodic && n > 2) out.emplace_back(n - 1, 0);
  return out;
}

std::string ModelSystem::name() const {
  std::ostringstream os;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FreeParticle>) {
          os << "free(n=" << dim() << ")";
        } else if constexpr (std::is_same_v<P, AnharmonicOscillator>) {
          os << "anharmonic(lambda=" << p.lambda << ")";
        } else if constexpr (std::is_same_v<P, Coulomb>) {
          os << "coulomb(r_cut=" << p.r_cut << ")";
        } else {
          os << "rotor(N=" << dim() << ",J=" << p.coupling << ","
             << (p.boundary == ChainBoundary::Open ? "open" : "periodic") << ")";
        }
      },
      potential_);
  os << ",beta=" << beta_;
  return os.str();
}

double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  double r = theta - 2.0 * pi * std::floor((theta + pi) / (2.0 * pi));
  if (r >= pi) r -= 2.0 * pi;
  if (r < -pi) r += 2.0 * pi;
  return r;
}

double potential_energy(const ModelSystem& system, std::span<const double> x) {
  if (static_cast<int>(x.size()) != system.dim()) {
    throw Error(ErrorKind::Dimension, "configuration has " + std::to_string(x.size()) +
                                          " components, geometry expects " +
                                          std::to_string(system.dim()));
  }
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FreeParticle>) {
          return 0.0;
        } else if constexpr (std::is_same_v<P, AnharmonicOscillator>) {
          const double x2 = x[0] * x[0];
          return 0.5 * x2 + p.lambda * x2 * x2;
        } else if constexpr (std::is_same_v<P, Coulomb>) {
          double r2 = 0.0;
          for (double v : x) r2 += v * v;
          return -1.0 / std::max(std::sqrt(r2), p.r_cut);
        } else {
          double e = 0.0;
          for (auto [i, j] : system.bonds()) e += std::cos(x[i] - x[j]);
          return -p.coupling * e;
        }
      },
      system.potential());
}

Vector wrap(const Geometry& geometry, const Vector& x) {
  if (!geometry.periodic()) return x;
  return x.unaryExpr([](double v) { return wrap_angle(v); });
}

Vector circular_displacement(const Geometry& geometry, const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() != geometry.dim())
    throw Error(ErrorKind::Dimension, "displacement between configurations of different size");
  return wrap(geometry, a - b);
}

}  // namespace pisoc
