#pragma once

#include "pisoc/ad.hpp"
#include "pisoc/error.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pisoc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Configuration space: R^n, or an N-torus of angles stored in [-pi, pi).
class Geometry {
 public:
  enum class Kind { Cartesian, Torus };

  static Geometry cartesian(int dims);
  static Geometry torus(int sites);

  Kind kind() const { return kind_; }
  bool periodic() const { return kind_ == Kind::Torus; }
  int dim() const { return dim_; }

  bool operator==(const Geometry&) const = default;

 private:
  Geometry(Kind kind, int dim) : kind_(kind), dim_(dim) {}
  Kind kind_;
  int dim_;
};

// V = 0 in R^n; the reference case for the bridge and closed-form kernels.
struct FreeParticle {};

struct AnharmonicOscillator {
  double lambda = 0.0;
};

struct Coulomb {
  double r_cut = 1e-3;
};

enum class ChainBoundary { Open, Periodic };

struct RotorChain {
  double coupling = 1.0;
  ChainBoundary boundary = ChainBoundary::Open;
};

using Potential = std::variant<FreeParticle, AnharmonicOscillator, Coulomb, RotorChain>;

/// A physical system at inverse temperature beta. The propagation time of
/// every path equals beta; there is no separate total-time parameter.
class ModelSystem {
 public:
  static ModelSystem free_particle(int dims, double beta);
  static ModelSystem anharmonic(double lambda, double beta);
  static ModelSystem coulomb(double beta, double r_cut = 1e-3);
  static ModelSystem rotor_chain(int sites, double coupling, double beta,
                                 ChainBoundary boundary = ChainBoundary::Open);

  const Geometry& geometry() const { return geometry_; }
  const Potential& potential() const { return potential_; }
  double beta() const { return beta_; }
  int dim() const { return geometry_.dim(); }

  bool is_rotor_chain() const { return std::holds_alternative<RotorChain>(potential_); }
  bool is_anharmonic() const { return std::holds_alternative<AnharmonicOscillator>(potential_); }

  // Same system at a different size (rotor chains only) or temperature.
  ModelSystem with_sites(int sites) const;
  ModelSystem with_beta(double beta) const;

  // Bonds (i, j) of the rotor chain; empty for other potentials.
  std::vector<std::pair<int, int>> bonds() const;

  std::string name() const;

 private:
  ModelSystem(Geometry g, Potential p, double beta);
  Geometry geometry_;
  Potential potential_;
  double beta_;
};

double wrap_angle(double theta);

/// V(x) for a single configuration.
double potential_energy(const ModelSystem& system, std::span<const double> x);

/// Componentwise reduction to [-pi, pi) on the torus; identity on R^n.
Vector wrap(const Geometry& geometry, const Vector& x);

/// Minimal signed displacement a - b (shortest arc on the torus).
Vector circular_displacement(const Geometry& geometry, const Vector& a, const Vector& b);

// Batched forms over rows of [B x n]; usable with ad::Var for recording.
template <typename T>
T wrap_batch(const Geometry& geometry, const T& x) {
  if (geometry.periodic()) return ad::wrap_angle(x);
  return x;
}

// Minimal displacement a - b, row by row.
template <typename A, typename B>
auto displacement_batch(const Geometry& geometry, const A& a, const B& b) {
  auto d = ad::sub(a, b);
  if (geometry.periodic()) return ad::wrap_angle(d);
  return d;
}

/// V for each row of x [B x n] -> [B x 1].
template <typename T>
T potential_batch(const ModelSystem& system, const T& x) {
  return std::visit(
      [&](const auto& p) -> T {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FreeParticle>) {
          return ad::lift(Matrix::Zero(x.rows(), 1), x);
        } else if constexpr (std::is_same_v<P, AnharmonicOscillator>) {
          T x2 = ad::square(x);
          return ad::add(ad::scale(x2, 0.5), ad::scale(ad::square(x2), p.lambda));
        } else if constexpr (std::is_same_v<P, Coulomb>) {
          T r = ad::sqrt(ad::sum_cols(ad::square(x)));
          return ad::scale(ad::reciprocal(ad::clamp_min(r, p.r_cut)), -1.0);
        } else {
          const int n = system.dim();
          // Differences for the open part as one block, wrap bond appended.
          T left = ad::slice_cols(x, 1, n - 1);
          T right = ad::slice_cols(x, 0, n - 1);
          T energy = ad::sum_cols(ad::cos(ad::sub(left, right)));
          if (p.boundary == ChainBoundary::Periodic && n > 2) {
            T wrapb = ad::cos(ad::sub(ad::slice_cols(x, 0, 1), ad::slice_cols(x, n - 1, 1)));
            energy = ad::add(energy, wrapb);
          }
          return ad::scale(energy, -p.coupling);
        }
      },
      system.potential());
}

}  // namespace pisoc
