#pragma once

// Reference values that do not touch the path sampler: grid diagonalization
// for one particle, momentum-basis diagonalization for short rotor chains and
// closed-form kernels.

#include "pisoc/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pisoc {

enum class Discretization { Sinc, CentralDifference };

struct SpectralSolution {
  Vector energies;        // ascending
  Matrix wavefunctions;   // grid: psi_n(x_i) in column n, sum_i |psi|^2 h = 1
  Vector grid;            // x_i
  double extent = 0.0;    // L
  double spacing = 0.0;   // h
  Discretization method = Discretization::Sinc;

  // -(1/beta) log sum_n e^{-beta E_n}
  double free_energy(double beta) const;
  // e^{-beta E_last} / sum_n e^{-beta E_n}: weight of the highest kept state.
  double truncation_bound(double beta) const;
  // rho_beta(x, x). Sinc solutions interpolate exactly between grid points;
  // central-difference solutions interpolate linearly. With smoothing > 0 the
  // density is <x| e^{-beta H} |g_x> where g_x is a normalized Gaussian of
  // that width, i.e. the kernel seen through a smoothed delta.
  double diagonal_density(double beta, double x, double smoothing = 0.0) const;
  // Partition sum through the same smoothed delta: sum_n e^{-beta E_n}
  // <psi_n| e^{-s^2 p^2 / 2} |psi_n>.
  double smoothed_free_energy(double beta, double smoothing) const;

  double wavefunction(int n, double x) const;
};

/// Spectrum of p^2/2 + V(x) on [-L, L] with G grid points.
SpectralSolution ed_1d(const std::function<double(double)>& potential, double extent, int points,
                       Discretization method = Discretization::Sinc);
SpectralSolution ed_1d(const ModelSystem& oscillator, double extent, int points,
                       Discretization method = Discretization::Sinc);

struct OscillatorReference {
  double free_energy = 0.0;
  double ground_energy = 0.0;
  double extent = 0.0;
  int points = 0;
  double change = 0.0;  // largest change seen under G -> 2G and L -> 1.5 L
};

/// Converged oscillator free energy: refines G and L until free energy and
/// diagonal density at `probe` change by less than `tol`. Throws Convergence.
OscillatorReference oscillator_reference(const ModelSystem& oscillator, double tol = 1e-9);

struct RotorSpectrum {
  int sites = 0;
  int m_max = 0;
  ChainBoundary boundary = ChainBoundary::Open;
  double coupling = 0.0;
  Vector energies;  // all eigenvalues, ascending
  // Thermal <cos(theta_i - theta_j)> is evaluated blockwise on demand.
  struct Block {
    Vector energies;
    Matrix vectors;
    std::vector<std::vector<int>> states;
  };
  std::vector<Block> blocks;

  double free_energy_per_site(double beta) const;
  double correlation(double beta, int i, int j) const;
};

/// Momentum basis |m_1..m_N>, |m_i| <= m_max, block-diagonal in sum m_i.
RotorSpectrum ed_rotor(int sites, double coupling, int m_max,
                       ChainBoundary boundary = ChainBoundary::Open);

struct RotorReference {
  double free_energy_per_site = 0.0;
  int m_max = 0;
  double change = 0.0;
  std::vector<std::vector<double>> correlations;  // [N x N]
};

/// ed_rotor with m_max raised by 2 until F/N changes by less than `tol`.
RotorReference rotor_reference(const ModelSystem& rotor, int m_start = 8, double tol = 1e-6);

// ---- closed forms ---------------------------------------------------------

double free_particle_kernel(const Vector& x0, const Vector& xT, double total);
double harmonic_kernel(double x0, double xT, double total);
double harmonic_free_energy(double beta);
/// Single free rotor: -(1/beta) log sum_{|m| <= m_cut} e^{-beta m^2 / 2}.
double free_rotor_free_energy(double beta, int m_cut = 10);
/// Large-beta diagonal of the hydrogen kernel at radius r (ground state only).
double hydrogen_ground_state_kernel(double r, double beta);

// ---- disk cache -----------------------------------------------------------

class OracleCache {
 public:
  explicit OracleCache(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::optional<nlohmann::json> load(const std::string& key) const;
  void store(const std::string& key, const nlohmann::json& value) const;
  nlohmann::json get_or_compute(const std::string& key,
                                const std::function<nlohmann::json()>& compute) const;

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

/// Cache key text for a model at a given resolution.
std::string oracle_key(const std::string& kind, const ModelSystem& system, const std::string& resolution);

}  // namespace pisoc
